//! The layered pacing controller.
//!
//! Requests are grouped into layers by predicted response rate, each layer
//! with its own participation probability. Higher layers respond better and
//! never get a lower rate than the layers beneath them. At every slot
//! boundary the controller replans the remaining budget, measures the
//! residual against what was actually spent, and moves layer rates to
//! offset it, optionally trimming bad layers to respect an eCPC goal.

mod adjust;
mod boundaries;

use serde::{Deserialize, Serialize};

pub use adjust::{
    adjust_with_goal, adjust_without_goal, apply_goal, assign_initial_rates, default_num_layers, enforce_monotone,
    exp_perf, is_monotone, reset_if_dead, trial_rate, AdjustOptions, Adjustment,
};
pub use boundaries::{classify, derive_boundaries, derive_boundaries_weighted};

use crate::controller::{Pacer, RateTable};
use crate::error::{PacingError, Result};
use crate::money::Money;
use crate::plan::{replan, residual, CampaignSpec};
use crate::slot::SlotReport;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerConfig {
    /// Rate used for every request during the initialization slot.
    pub global_init_rate: f64,
    /// Requested number of layers; ties in the observed rates may reduce it.
    pub num_layers: usize,
    /// Fraction of the next slot's budget a trial layer is meant to spend.
    pub trial_budget_fraction: f64,
    pub scale_trial_layer: bool,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        let global_init_rate = 0.01;
        Self {
            global_init_rate,
            num_layers: default_num_layers(global_init_rate).unwrap_or(1),
            trial_budget_fraction: 0.01,
            scale_trial_layer: true,
        }
    }
}

impl ControllerConfig {
    pub fn with_layers(num_layers: usize) -> Self {
        Self { num_layers, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.global_init_rate > 0.0 && self.global_init_rate <= 1.0) {
            return Err(PacingError::InvalidRate(self.global_init_rate));
        }
        if self.num_layers == 0 {
            return Err(PacingError::Config { path: "layers".into(), message: "must be positive".into() });
        }
        if !(self.trial_budget_fraction > 0.0 && self.trial_budget_fraction < 1.0) {
            return Err(PacingError::Config {
                path: "trial_budget_fraction".into(),
                message: "must lie in (0, 1)".into(),
            });
        }
        Ok(())
    }

    fn adjust_options(&self) -> AdjustOptions {
        AdjustOptions { scale_trial_layer: self.scale_trial_layer }
    }
}

/// Spend and rate from the most recent slot in which a layer was both active
/// and delivering.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialHistory {
    pub spend: Money,
    pub rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerState {
    /// Average predicted response rate of impressions delivered in this layer.
    pub response_rate: f64,
    pub pacing_rate: f64,
    pub last_slot_spend: Money,
    pub history: Option<TrialHistory>,
    observed_impressions: u64,
    observed_ctr_sum: f64,
}

impl LayerState {
    fn new(pacing_rate: f64) -> Self {
        Self {
            response_rate: 0.0,
            pacing_rate,
            last_slot_spend: Money::ZERO,
            history: None,
            observed_impressions: 0,
            observed_ctr_sum: 0.0,
        }
    }

    fn observe(&mut self, impressions: u64, ctr_sum: f64) {
        self.observed_impressions += impressions;
        self.observed_ctr_sum += ctr_sum;
        if self.observed_impressions > 0 {
            self.response_rate = self.observed_ctr_sum / self.observed_impressions as f64;
        }
    }

    /// Estimated cost per click under CPM billing.
    pub fn ecpc_estimate(&self, cpm: Money) -> f64 {
        cpm.to_units() / (1000.0 * self.response_rate)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    /// Serving every request at the global rate to learn layer boundaries.
    Initializing,
    Adjusting,
    /// Budget exhausted or quick-stopped.
    Stopped,
}

/// The controller's whole mutable state for one campaign.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PacingState {
    /// Ordered lowest priority first.
    pub layers: Vec<LayerState>,
    /// Next slot to be served, 0-based.
    pub slot_index: usize,
    pub remaining_budget: Money,
    pub trial_layer: Option<usize>,
    pub boundaries: Vec<f64>,
    pub phase: Phase,
    /// Number of all-zero resets performed so far.
    pub resets: u32,
}

impl PacingState {
    /// Fresh state for the initialization slot: every layer at the global
    /// rate and no boundaries, so all traffic lands in one bucket.
    pub fn initialize(spec: &CampaignSpec, cfg: &ControllerConfig) -> Self {
        Self {
            layers: (0..cfg.num_layers.max(1)).map(|_| LayerState::new(cfg.global_init_rate)).collect(),
            slot_index: 0,
            remaining_budget: spec.budget,
            trial_layer: None,
            boundaries: Vec::new(),
            phase: Phase::Initializing,
            resets: 0,
        }
    }

    pub fn rates(&self) -> Vec<f64> {
        self.layers.iter().map(|l| l.pacing_rate).collect()
    }

    pub fn rate_table(&self) -> RateTable {
        match self.phase {
            Phase::Stopped => RateTable::stopped(),
            Phase::Initializing => RateTable::uniform(self.layers[0].pacing_rate),
            Phase::Adjusting => RateTable { boundaries: self.boundaries.clone(), rates: self.rates() },
        }
    }

    pub fn stop(&mut self) {
        self.phase = Phase::Stopped;
        self.trial_layer = None;
        for layer in &mut self.layers {
            layer.pacing_rate = 0.0;
        }
    }

    /// Consumes feedback for the slot that just ended and sets the rates for
    /// the next one: replan, clamp the next target at zero, take the
    /// residual, adjust, reset if every layer died, restore ordering.
    pub fn end_of_slot(&mut self, report: &SlotReport, spec: &CampaignSpec, cfg: &ControllerConfig) -> Result<()> {
        if report.slot != self.slot_index {
            return Err(PacingError::Invariant(format!(
                "report for slot {} delivered to controller at slot {}",
                report.slot, self.slot_index
            )));
        }
        let elapsed = report.slot + 1;
        self.slot_index = elapsed;
        self.remaining_budget = (spec.budget - report.cumulative_spend).max(Money::ZERO);

        match self.phase {
            Phase::Stopped => Ok(()),
            Phase::Initializing => self.finish_initialization(report, spec, cfg),
            Phase::Adjusting => self.adjust(report, spec, cfg),
        }
    }

    fn next_target(&mut self, spec: &CampaignSpec) -> Result<Option<f64>> {
        if self.slot_index >= spec.num_slots() {
            return Ok(None);
        }
        if self.remaining_budget <= Money::ZERO {
            self.stop();
            return Ok(None);
        }
        let targets = replan(spec, self.slot_index, self.remaining_budget)?;
        Ok(Some(targets[0].max(0.0)))
    }

    fn trial_rates(&self, target: f64, cfg: &ControllerConfig) -> Vec<f64> {
        self.layers
            .iter()
            .map(|l| match l.history {
                Some(h) => trial_rate(h.spend.to_units(), h.rate, target, cfg.trial_budget_fraction, cfg.global_init_rate),
                None => cfg.global_init_rate,
            })
            .collect()
    }

    fn ecpc(&self, spec: &CampaignSpec) -> Vec<f64> {
        self.layers.iter().map(|l| l.ecpc_estimate(spec.cpm)).collect()
    }

    fn finish_initialization(&mut self, report: &SlotReport, spec: &CampaignSpec, cfg: &ControllerConfig) -> Result<()> {
        let observed = report.impression_histogram();
        if observed.is_empty() {
            // nothing delivered yet: keep probing at the global rate
            if self.next_target(spec)?.is_none() {
                return Ok(());
            }
            return Ok(());
        }
        self.boundaries = derive_boundaries_weighted(&observed, cfg.num_layers);
        let r_g = cfg.global_init_rate;
        self.layers = report
            .per_layer(&self.boundaries)
            .into_iter()
            .map(|t| {
                let mut layer = LayerState::new(r_g);
                layer.last_slot_spend = t.totals.spend;
                layer.observe(t.totals.impressions, t.ctr_sum);
                if t.totals.spend > Money::ZERO {
                    layer.history = Some(TrialHistory { spend: t.totals.spend, rate: r_g });
                }
                layer
            })
            .collect();
        self.phase = Phase::Adjusting;

        let Some(target) = self.next_target(spec)? else {
            return Ok(());
        };
        let trial = self.trial_rates(target, cfg);
        let spend: Vec<f64> = self.layers.iter().map(|l| l.last_slot_spend.to_units()).collect();
        let full: Vec<f64> = spend.iter().map(|c| c / r_g).collect();
        let mut adj = assign_initial_rates(&full, target, &trial);
        if let Some(goal) = spec.ecpc_goal {
            let prev = vec![r_g; self.layers.len()];
            apply_goal(&spend, &prev, &self.ecpc(spec), goal.to_units(), &trial, &mut adj);
        }
        self.install(adj, &trial);
        Ok(())
    }

    fn adjust(&mut self, report: &SlotReport, spec: &CampaignSpec, cfg: &ControllerConfig) -> Result<()> {
        for (layer, t) in self.layers.iter_mut().zip(report.per_layer(&self.boundaries)) {
            layer.last_slot_spend = t.totals.spend;
            layer.observe(t.totals.impressions, t.ctr_sum);
            if layer.pacing_rate > 0.0 && t.totals.spend > Money::ZERO {
                layer.history = Some(TrialHistory { spend: t.totals.spend, rate: layer.pacing_rate });
            }
        }
        let Some(target) = self.next_target(spec)? else {
            return Ok(());
        };
        let trial = self.trial_rates(target, cfg);
        let spend: Vec<f64> = self.layers.iter().map(|l| l.last_slot_spend.to_units()).collect();
        let prev = self.rates();
        let r = residual(target, report.total().spend.to_units());
        let adj = match spec.ecpc_goal {
            Some(goal) => adjust_with_goal(
                &spend,
                &prev,
                r,
                &self.ecpc(spec),
                goal.to_units(),
                &trial,
                self.trial_layer,
                cfg.adjust_options(),
            ),
            None => adjust_without_goal(&spend, &prev, r, &trial, self.trial_layer, cfg.adjust_options()),
        };
        self.install(adj, &trial);
        Ok(())
    }

    fn install(&mut self, mut adj: Adjustment, trial: &[f64]) {
        let top = adj.rates.len() - 1;
        if reset_if_dead(&mut adj.rates, trial[top]) {
            adj.trial_layer = Some(top);
            self.resets += 1;
        }
        enforce_monotone(&mut adj.rates, adj.trial_layer);
        for (layer, rate) in self.layers.iter_mut().zip(&adj.rates) {
            layer.pacing_rate = *rate;
        }
        self.trial_layer = adj.trial_layer;
    }
}

/// The layered controller bound to one campaign.
#[derive(Clone, Debug)]
pub struct LayeredPacer {
    pub spec: CampaignSpec,
    pub cfg: ControllerConfig,
    pub state: PacingState,
}

impl LayeredPacer {
    pub fn new(spec: CampaignSpec, cfg: ControllerConfig) -> Result<Self> {
        cfg.validate()?;
        let state = PacingState::initialize(&spec, &cfg);
        Ok(Self { spec, cfg, state })
    }
}

impl Pacer for LayeredPacer {
    fn label(&self) -> String {
        format!("layered-{}", self.cfg.num_layers)
    }

    fn rate_table(&self) -> RateTable {
        self.state.rate_table()
    }

    fn end_of_slot(&mut self, report: &SlotReport) -> Result<()> {
        self.state.end_of_slot(report, &self.spec, &self.cfg)
    }

    fn stop(&mut self) {
        self.state.stop();
    }
}
