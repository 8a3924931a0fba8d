//! Layered budget pacing for CPM campaigns.
//!
//! The crate holds the controllers (layered, global-rate and the
//! allocation-following comparator), a seeded delivery simulator and the
//! in-process feedback pipeline that carries delivery data back to them.

pub mod baselines;
pub mod controller;
pub mod error;
pub mod layered;
pub mod money;
pub mod pipeline;
pub mod plan;
pub mod report;
pub mod scenario;
pub mod sim;
pub mod slot;

pub use controller::{Pacer, RateTable};
pub use error::{PacingError, Result};
pub use layered::{ControllerConfig, LayeredPacer, PacingState, Phase};
pub use money::Money;
pub use plan::{avg_err, penalty, replan, residual, CampaignId, CampaignSpec, PerformanceRecord, SpendingRecord};
pub use slot::{CtrBucket, SlotReport, Totals};
pub use report::{run_scenario, SummaryRow};
pub use scenario::Scenario;
pub use sim::{run_campaign, RngSpec, RunArtifacts, RunOptions, TrafficModel};

/// Scenario files shipped with the crate.
pub mod presets {
    pub const FIG8_NO_GOAL: &str = include_str!("../../../scenarios/fig8-no-goal.toml");
    pub const FIG9_GOAL: &str = include_str!("../../../scenarios/fig9-goal.toml");
    pub const COMPARATOR: &str = include_str!("../../../scenarios/comparator.toml");

    /// `(name, contents)` of every preset.
    pub const ALL: [(&str, &str); 3] = [("fig8-no-goal", FIG8_NO_GOAL), ("fig9-goal", FIG9_GOAL), ("comparator", COMPARATOR)];
}
