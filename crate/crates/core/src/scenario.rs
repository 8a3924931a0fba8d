//! Scenario files: what to simulate, with which controllers, over which
//! seeds and budgets.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{build_allocation, increments, ComparatorPacer, GlobalPacer};
use crate::controller::Pacer;
use crate::error::{PacingError, Result};
use crate::layered::{ControllerConfig, LayeredPacer};
use crate::money::Money;
use crate::pipeline::PipelineConfig;
use crate::plan::{avg_err, CampaignId, CampaignSpec};
use crate::sim::{
    default_ctr_histogram, default_win_rate_curve, diurnal_weights, run_campaign, Concern, RngSpec, RunArtifacts,
    RunOptions, TrafficModel, WinRateCurve,
};

const MINUTES_PER_DAY: u32 = 1440;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanKind {
    /// Equal budget per slot.
    #[default]
    Even,
    /// Budget proportional to forecast traffic per slot.
    Traffic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CampaignConfig {
    pub cpm: f64,
    pub ecpc_goal: Option<f64>,
    pub plan: PlanKind,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self { cpm: 5.0, ecpc_goal: None, plan: PlanKind::Even }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrafficConfig {
    pub total_requests: u64,
    /// Relative per-slot noise on realized volume against the diurnal shape.
    pub weight_noise: f64,
    /// Past days averaged into the traffic forecast.
    pub forecast_days: u32,
    /// Custom `[ctr, mass]` pairs; the built-in mix when absent.
    pub ctr_histogram: Option<Vec<(f64, f64)>>,
    /// Custom `[ctr, win rate]` points; the built-in curve when absent.
    pub win_rate_curve: Option<Vec<(f64, f64)>>,
    pub win_rate_scale: f64,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        Self {
            total_requests: 10_000_000,
            weight_noise: 0.0,
            forecast_days: 7,
            ctr_histogram: None,
            win_rate_curve: None,
            win_rate_scale: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControllerSpec {
    Layered {
        layers: usize,
        #[serde(default = "default_init_rate")]
        global_init_rate: f64,
        #[serde(default = "default_trial_fraction")]
        trial_budget_fraction: f64,
        #[serde(default = "default_true")]
        scale_trial_layer: bool,
    },
    Global {
        #[serde(default = "default_init_rate")]
        global_init_rate: f64,
    },
    Comparator {
        #[serde(default = "default_init_rate")]
        initial_rate: f64,
    },
}

fn default_init_rate() -> f64 {
    0.01
}

fn default_trial_fraction() -> f64 {
    0.01
}

fn default_true() -> bool {
    true
}

impl ControllerSpec {
    pub fn label(&self) -> String {
        match self {
            ControllerSpec::Layered { layers, .. } => format!("layered-{layers}"),
            ControllerSpec::Global { .. } => "global".into(),
            ControllerSpec::Comparator { .. } => "comparator".into(),
        }
    }

    pub fn build(&self, spec: &CampaignSpec) -> Result<Box<dyn Pacer>> {
        Ok(match self {
            ControllerSpec::Layered { layers, global_init_rate, trial_budget_fraction, scale_trial_layer } => {
                let cfg = ControllerConfig {
                    global_init_rate: *global_init_rate,
                    num_layers: *layers,
                    trial_budget_fraction: *trial_budget_fraction,
                    scale_trial_layer: *scale_trial_layer,
                };
                Box::new(LayeredPacer::new(spec.clone(), cfg)?)
            }
            ControllerSpec::Global { global_init_rate } => {
                let cfg = ControllerConfig { global_init_rate: *global_init_rate, ..ControllerConfig::with_layers(1) };
                Box::new(GlobalPacer::new(spec.clone(), cfg)?)
            }
            ControllerSpec::Comparator { initial_rate } => Box::new(ComparatorPacer::new(spec, *initial_rate)?),
        })
    }

    fn validate(&self, path: &str) -> Result<()> {
        let bad = |field: &str, message: &str| {
            Err(PacingError::Config { path: format!("{path}.{field}"), message: message.into() })
        };
        let rate_ok = |r: f64| r > 0.0 && r <= 1.0;
        match self {
            ControllerSpec::Layered { layers, global_init_rate, trial_budget_fraction, .. } => {
                if *layers == 0 {
                    return bad("layers", "must be at least 1");
                }
                if !rate_ok(*global_init_rate) {
                    return bad("global_init_rate", "must lie in (0, 1]");
                }
                if !(*trial_budget_fraction > 0.0 && *trial_budget_fraction < 1.0) {
                    return bad("trial_budget_fraction", "must lie in (0, 1)");
                }
            }
            ControllerSpec::Global { global_init_rate } => {
                if !rate_ok(*global_init_rate) {
                    return bad("global_init_rate", "must lie in (0, 1]");
                }
            }
            ControllerSpec::Comparator { initial_rate } => {
                if !rate_ok(*initial_rate) {
                    return bad("initial_rate", "must lie in (0, 1]");
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default = "default_slot_minutes")]
    pub slot_minutes: u32,
    /// Virtual-clock ticks per slot; defaults to one per minute.
    #[serde(default)]
    pub ticks_per_slot: Option<u64>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_replications")]
    pub replications: u32,
    /// Explicit seeds; overrides `seed` and `replications`.
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    pub budgets: Vec<f64>,
    #[serde(default)]
    pub campaign: CampaignConfig,
    #[serde(default)]
    pub traffic: TrafficConfig,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    pub controllers: Vec<ControllerSpec>,
}

fn default_slot_minutes() -> u32 {
    15
}

fn default_seed() -> u64 {
    1
}

fn default_replications() -> u32 {
    1
}

impl Scenario {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        let scenario: Scenario = toml::from_str(text).map_err(|e| PacingError::Config {
            path: origin.into(),
            message: e.to_string().trim_end().to_string(),
        })?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PacingError::Config { path: path.display().to_string(), message: e.to_string() })?;
        Self::from_toml(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |path: &str, message: String| Err(PacingError::Config { path: path.into(), message });
        if self.slot_minutes == 0 || !MINUTES_PER_DAY.is_multiple_of(self.slot_minutes) {
            return bad("slot_minutes", format!("{} does not divide a day of {MINUTES_PER_DAY} minutes", self.slot_minutes));
        }
        if self.ticks_per_slot == Some(0) {
            return bad("ticks_per_slot", "must be positive".into());
        }
        if self.controllers.is_empty() {
            return bad("controllers", "at least one controller is required".into());
        }
        for (i, c) in self.controllers.iter().enumerate() {
            c.validate(&format!("controllers[{i}]"))?;
        }
        if self.budgets.is_empty() {
            return bad("budgets", "at least one budget is required".into());
        }
        if let Some(i) = self.budgets.iter().position(|b| !(b.is_finite() && *b > 0.0)) {
            return bad(&format!("budgets[{i}]"), "must be positive".into());
        }
        let seeds = self.seeds();
        if seeds.is_empty() {
            return bad("replications", "must be at least 1".into());
        }
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return bad("seeds", "must be distinct".into());
        }
        if !(self.campaign.cpm > 0.0 && self.campaign.cpm.is_finite()) {
            return bad("campaign.cpm", "must be positive".into());
        }
        if matches!(self.campaign.ecpc_goal, Some(g) if !(g > 0.0)) {
            return bad("campaign.ecpc_goal", "must be positive".into());
        }
        if !(self.traffic.weight_noise >= 0.0 && self.traffic.weight_noise < 1.0) {
            return bad("traffic.weight_noise", "must lie in [0, 1)".into());
        }
        if self.traffic.forecast_days == 0 {
            return bad("traffic.forecast_days", "must be positive".into());
        }
        if !(self.traffic.win_rate_scale > 0.0) {
            return bad("traffic.win_rate_scale", "must be positive".into());
        }
        self.pipeline.validate()?;
        self.base_model().map_err(|e| PacingError::Config { path: "traffic".into(), message: e.to_string() })?;
        Ok(())
    }

    pub fn seeds(&self) -> Vec<u64> {
        match &self.seeds {
            Some(s) => s.clone(),
            None => (0..self.replications as u64).map(|i| self.seed + i).collect(),
        }
    }

    pub fn num_slots(&self) -> usize {
        (MINUTES_PER_DAY / self.slot_minutes) as usize
    }

    pub fn ticks_per_slot(&self) -> u64 {
        self.ticks_per_slot.unwrap_or(self.slot_minutes as u64)
    }

    /// Noise-free traffic model for this scenario's slot length.
    pub fn base_model(&self) -> Result<TrafficModel> {
        let curve = match &self.traffic.win_rate_curve {
            Some(points) => WinRateCurve::new(points.clone())?,
            None => default_win_rate_curve(),
        };
        TrafficModel::new(
            diurnal_weights(self.num_slots()),
            self.traffic.total_requests,
            self.traffic.ctr_histogram.clone().unwrap_or_else(default_ctr_histogram),
            curve.scaled(self.traffic.win_rate_scale),
        )
    }

    /// The day actually served under `seed`.
    pub fn realized_model(&self, seed: u64) -> Result<TrafficModel> {
        let base = self.base_model()?;
        if self.traffic.weight_noise == 0.0 {
            return Ok(base);
        }
        Ok(base.with_weight_noise(self.traffic.weight_noise, &mut RngSpec::new(seed).stream(Concern::Traffic, 0)))
    }

    /// Per-slot forecast: summed request counts of the previous days.
    pub fn forecast(&self, seed: u64) -> Result<Vec<u64>> {
        let base = self.base_model()?;
        if self.traffic.weight_noise == 0.0 {
            return Ok(base.slot_request_counts());
        }
        let rng = RngSpec::new(seed);
        let mut sum = vec![0u64; self.num_slots()];
        for day in 1..=self.traffic.forecast_days as u64 {
            let past = base.with_weight_noise(self.traffic.weight_noise, &mut rng.stream(Concern::Traffic, day));
            for (s, c) in sum.iter_mut().zip(past.slot_request_counts()) {
                *s += c;
            }
        }
        Ok(sum)
    }

    pub fn campaign_spec(&self, budget: f64, seed: u64) -> Result<CampaignSpec> {
        let id = CampaignId(1);
        let budget = Money::from_units(budget);
        let cpm = Money::from_units(self.campaign.cpm);
        let goal = self.campaign.ecpc_goal.map(Money::from_units);
        match self.campaign.plan {
            PlanKind::Even => CampaignSpec::even(id, budget, cpm, goal, self.num_slots()),
            PlanKind::Traffic => {
                let allocation = build_allocation(&self.forecast(seed)?, budget)?;
                CampaignSpec::new(id, cpm, goal, increments(&allocation))
            }
        }
    }

    fn run_options(&self) -> RunOptions {
        RunOptions { ticks_per_slot: self.ticks_per_slot(), pipeline: self.pipeline.clone(), ..RunOptions::default() }
    }

    /// Every (budget, controller, seed) combination, in that nesting order.
    pub fn jobs(&self) -> Vec<Job> {
        let mut jobs = Vec::new();
        for &budget in &self.budgets {
            for (controller, _) in self.controllers.iter().enumerate() {
                for seed in self.seeds() {
                    jobs.push(Job { budget, controller, seed });
                }
            }
        }
        jobs
    }

    pub fn run_job(&self, job: &Job, opts: &RunOptions) -> Result<RunArtifacts> {
        let spec = self.campaign_spec(job.budget, job.seed)?;
        let model = self.realized_model(job.seed)?;
        let mut pacer = self.controllers[job.controller].build(&spec)?;
        let artifacts = run_campaign(&spec, &model, pacer.as_mut(), RngSpec::new(job.seed), opts)?;
        check_run(&artifacts, &spec, opts)?;
        Ok(artifacts)
    }

    /// Runs every job, replications in parallel; results keep job order.
    pub fn run_all(&self) -> Result<Vec<(Job, RunArtifacts)>> {
        let opts = self.run_options();
        self.jobs().into_par_iter().map(|job| self.run_job(&job, &opts).map(|a| (job, a))).collect()
    }

    /// Same override rules the command line applies.
    pub fn with_overrides(mut self, seed: Option<u64>, replications: Option<u32>, slot_minutes: Option<u32>) -> Result<Self> {
        if seed.is_some() || replications.is_some() {
            self.seeds = None;
        }
        if let Some(s) = seed {
            self.seed = s;
        }
        if let Some(r) = replications {
            self.replications = r;
        }
        if let Some(m) = slot_minutes {
            self.slot_minutes = m;
            self.ticks_per_slot = None;
        }
        self.validate()?;
        Ok(self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Job {
    pub budget: f64,
    pub controller: usize,
    pub seed: u64,
}

/// Post-run invariants beyond the ones the simulator enforces itself.
pub fn check_run(a: &RunArtifacts, spec: &CampaignSpec, opts: &RunOptions) -> Result<()> {
    if a.avg_err != avg_err(a.omega, spec)? {
        return Err(PacingError::Invariant("AvgErr disagrees with its recomputation from omega".into()));
    }
    if opts.pipeline.quick_stop && a.overshoot() > a.overshoot_bound() {
        return Err(PacingError::Invariant(format!(
            "overspent by {} with a quick-stop bound of {}",
            a.overshoot(),
            a.overshoot_bound()
        )));
    }
    Ok(())
}
