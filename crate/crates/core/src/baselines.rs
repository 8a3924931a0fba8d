//! Reference controllers: a single global pacing rate, and the per-minute
//! ±10% comparator that chases a traffic-proportional allocation curve.

use serde::{Deserialize, Serialize};

use crate::controller::{Pacer, RateTable};
use crate::error::{PacingError, Result};
use crate::layered::{ControllerConfig, PacingState, Phase};
use crate::money::Money;
use crate::plan::CampaignSpec;
use crate::slot::SlotReport;

/// The layered controller restricted to one layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalRateState(pub PacingState);

impl GlobalRateState {
    pub fn initialize(spec: &CampaignSpec, cfg: &ControllerConfig) -> Self {
        GlobalRateState(PacingState::initialize(spec, &single_layer(cfg)))
    }

    pub fn rate(&self) -> f64 {
        match self.0.phase {
            Phase::Stopped => 0.0,
            _ => self.0.layers[0].pacing_rate,
        }
    }
}

fn single_layer(cfg: &ControllerConfig) -> ControllerConfig {
    ControllerConfig { num_layers: 1, ..cfg.clone() }
}

pub fn global_baseline_step(
    state: &mut GlobalRateState,
    report: &SlotReport,
    spec: &CampaignSpec,
    cfg: &ControllerConfig,
) -> Result<()> {
    state.0.end_of_slot(report, spec, &single_layer(cfg))
}

#[derive(Clone, Debug)]
pub struct GlobalPacer {
    pub spec: CampaignSpec,
    pub cfg: ControllerConfig,
    pub state: GlobalRateState,
}

impl GlobalPacer {
    pub fn new(spec: CampaignSpec, cfg: ControllerConfig) -> Result<Self> {
        let cfg = single_layer(&cfg);
        cfg.validate()?;
        let state = GlobalRateState::initialize(&spec, &cfg);
        Ok(Self { spec, cfg, state })
    }
}

impl Pacer for GlobalPacer {
    fn label(&self) -> String {
        "global".into()
    }

    fn rate_table(&self) -> RateTable {
        self.state.0.rate_table()
    }

    fn end_of_slot(&mut self, report: &SlotReport) -> Result<()> {
        global_baseline_step(&mut self.state, report, &self.spec, &self.cfg)
    }

    fn stop(&mut self) {
        self.state.0.stop();
    }
}

/// Cumulative allocation proportional to cumulative forecast traffic, ending
/// exactly at `budget`.
pub fn build_allocation(forecast: &[u64], budget: Money) -> Result<Vec<Money>> {
    let total: u128 = forecast.iter().map(|c| *c as u128).sum();
    if total == 0 {
        return Err(PacingError::EmptyForecast);
    }
    if budget.is_negative() {
        return Err(PacingError::InvalidCampaign("negative budget".into()));
    }
    let b = budget.micros() as u128;
    let mut cumulative = 0u128;
    Ok(forecast
        .iter()
        .map(|c| {
            cumulative += *c as u128;
            // round half up
            Money::from_micros(((2 * b * cumulative + total) / (2 * total)) as i64)
        })
        .collect())
}

/// Per-slot increments of a cumulative curve.
pub fn increments(cumulative: &[Money]) -> Vec<Money> {
    let mut prev = Money::ZERO;
    cumulative
        .iter()
        .map(|c| {
            let d = *c - prev;
            prev = *c;
            d
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeedbackComparatorState {
    pub rate: f64,
    /// Cumulative allocation at the end of each minute.
    pub allocation: Vec<Money>,
    pub cumulative_spend: Money,
}

impl FeedbackComparatorState {
    pub fn new(initial_rate: f64, allocation: Vec<Money>) -> Result<Self> {
        if !(0.0..=1.0).contains(&initial_rate) {
            return Err(PacingError::InvalidRate(initial_rate));
        }
        if allocation.windows(2).any(|w| w[1] < w[0]) {
            return Err(PacingError::InvalidCampaign("allocation curve must be non-decreasing".into()));
        }
        Ok(Self { rate: initial_rate, allocation, cumulative_spend: Money::ZERO })
    }
}

/// One minute of the comparator: up 10% when behind the allocation, down
/// 10% when ahead, unchanged on an exact tie.
pub fn comparator_step(state: &mut FeedbackComparatorState, minute: usize, spend_so_far: Money) -> Result<()> {
    let target = *state
        .allocation
        .get(minute)
        .ok_or(PacingError::SlotOutOfRange { elapsed: minute, num_slots: state.allocation.len() })?;
    state.cumulative_spend = spend_so_far;
    if spend_so_far < target {
        state.rate = (state.rate * 1.1).min(1.0);
    } else if spend_so_far > target {
        state.rate *= 0.9;
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct ComparatorPacer {
    pub state: FeedbackComparatorState,
    stopped: bool,
}

impl ComparatorPacer {
    /// Follows the campaign's own spending plan as its allocation curve.
    pub fn new(spec: &CampaignSpec, initial_rate: f64) -> Result<Self> {
        let mut cumulative = Money::ZERO;
        let allocation = spec
            .spending_plan()
            .iter()
            .map(|b| {
                cumulative += *b;
                cumulative
            })
            .collect();
        Ok(Self { state: FeedbackComparatorState::new(initial_rate, allocation)?, stopped: false })
    }
}

impl Pacer for ComparatorPacer {
    fn label(&self) -> String {
        "comparator".into()
    }

    fn rate_table(&self) -> RateTable {
        if self.stopped {
            RateTable::stopped()
        } else {
            RateTable::uniform(self.state.rate)
        }
    }

    fn end_of_slot(&mut self, report: &SlotReport) -> Result<()> {
        if self.stopped || report.slot >= self.state.allocation.len() {
            return Ok(());
        }
        comparator_step(&mut self.state, report.slot, report.cumulative_spend)
    }

    fn stop(&mut self) {
        self.stopped = true;
    }
}
