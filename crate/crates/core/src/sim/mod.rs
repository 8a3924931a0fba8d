//! Seeded campaign-delivery simulator.

pub mod rng;
pub mod run;
pub mod serve;
pub mod traffic;

pub use rng::{Concern, RngSpec};
pub use run::{run_campaign, RunArtifacts, RunOptions, SlotRow};
pub use serve::{generate_slot, serve, AdRequest, DeliveryEvent, DrawSource, Draws, Served};
pub use traffic::{default_ctr_histogram, default_win_rate_curve, diurnal_weights, CtrSampler, TrafficModel, WinRateCurve};
