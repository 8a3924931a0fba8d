//! Driving one campaign through a simulated day.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::rng::RngSpec;
use super::serve::{generate_slot, serve, DrawSource};
use super::traffic::TrafficModel;
use crate::controller::Pacer;
use crate::error::{PacingError, Result};
use crate::money::Money;
use crate::pipeline::{FaultPlan, Pipeline, PipelineConfig};
use crate::plan::{avg_err, penalty, CampaignSpec, SpendingRecord};
use crate::slot::Totals;

#[derive(Clone, Debug, PartialEq)]
pub struct RunOptions {
    /// Virtual-clock ticks per slot; requests are spread evenly over them.
    pub ticks_per_slot: u64,
    pub pipeline: PipelineConfig,
    pub faults: FaultPlan,
    pub event_log: Option<PathBuf>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { ticks_per_slot: 15, pipeline: PipelineConfig::default(), faults: FaultPlan::default(), event_log: None }
    }
}

/// Ground truth for one slot plus the rates it was served with.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotRow {
    pub slot: usize,
    pub planned: Money,
    pub spent: Money,
    pub impressions: u64,
    pub clicks: u64,
    pub requests: u64,
    pub participations: u64,
    /// Rates the controller set for this slot, lowest layer first.
    pub rates: Vec<f64>,
}

impl SlotRow {
    pub fn ecpc(&self) -> Option<f64> {
        (self.clicks > 0).then(|| self.spent.to_units() / self.clicks as f64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunArtifacts {
    pub label: String,
    pub seed: u64,
    pub budget: Money,
    pub rows: Vec<SlotRow>,
    pub totals: Totals,
    pub omega: f64,
    pub avg_err: f64,
    pub participations: u64,
    /// Requests seen while the campaign was not quick-stopped.
    pub eligible: u64,
    pub max_tick_spend: Money,
    pub feedback_delay_ticks: u64,
    pub quick_stop_tick: Option<u64>,
    pub push_failures: usize,
    pub batches: u64,
}

impl RunArtifacts {
    pub fn ecpc(&self) -> Option<f64> {
        (self.totals.clicks > 0).then(|| self.totals.spend.to_units() / self.totals.clicks as f64)
    }

    pub fn avg_pr(&self) -> Option<f64> {
        (self.eligible > 0).then(|| self.participations as f64 / self.eligible as f64)
    }

    pub fn overshoot(&self) -> Money {
        (self.totals.spend - self.budget).max(Money::ZERO)
    }

    /// Worst overspend quick stop allows: one feedback delay of the busiest
    /// tick's spend.
    pub fn overshoot_bound(&self) -> Money {
        self.max_tick_spend.times(self.feedback_delay_ticks)
    }

    pub fn utilization(&self) -> f64 {
        self.totals.spend.to_units() / self.budget.to_units()
    }

    pub fn spending_record(&self) -> SpendingRecord {
        SpendingRecord::new(self.rows.iter().map(|r| r.spent).collect()).expect("non-negative spend")
    }
}

/// Runs `pacer` over every slot of `spec` against `model`.
///
/// Deliveries flow through the pipeline; at each slot boundary the pacer
/// reads the store's report, and its new rates are pushed to the bidders.
/// Fails if the store and ground truth disagree once the queue drains.
pub fn run_campaign(
    spec: &CampaignSpec,
    model: &TrafficModel,
    pacer: &mut dyn Pacer,
    rng: RngSpec,
    opts: &RunOptions,
) -> Result<RunArtifacts> {
    model.validate()?;
    if model.num_slots() != spec.num_slots() {
        return Err(PacingError::LengthMismatch { expected: spec.num_slots(), actual: model.num_slots() });
    }
    if opts.ticks_per_slot == 0 {
        return Err(PacingError::Config { path: "ticks_per_slot".into(), message: "must be positive".into() });
    }
    let mut pipeline = Pipeline::new(opts.pipeline.clone(), opts.faults.clone())?;
    if let Some(path) = &opts.event_log {
        pipeline = pipeline.with_event_log(path)?;
    }
    let id = spec.id;
    pipeline.register(id, spec.budget);
    let mut push_failures = pipeline.push_rates(id, &pacer.rate_table()).failures.len();

    let cost = spec.impression_cost();
    let counts = model.slot_request_counts();
    let ticks = opts.ticks_per_slot;
    let bidders = pipeline.num_bidders();
    let mut rows = Vec::with_capacity(spec.num_slots());
    let mut truth = Totals::default();
    let (mut participations, mut eligible) = (0u64, 0u64);
    let mut max_tick_spend = Money::ZERO;
    let mut quick_stop_tick = None;

    for slot in 0..spec.num_slots() {
        let requests = generate_slot(model, slot, counts[slot], &rng);
        let mut draws = DrawSource::for_slot(&rng, slot);
        let tables: Vec<_> = (0..bidders).map(|b| pipeline.rates(b, id)).collect();
        let mut row = SlotRow {
            slot,
            planned: spec.spending_plan()[slot],
            spent: Money::ZERO,
            impressions: 0,
            clicks: 0,
            requests: requests.len() as u64,
            participations: 0,
            rates: pacer.rate_table().rates,
        };
        let n = requests.len() as u64;
        let base = slot as u64 * ticks;
        let mut tick = 0u64;
        let mut tick_spend = Money::ZERO;
        for (j, req) in requests.iter().enumerate() {
            let d = draws.next_draws();
            let t = j as u64 * ticks / n;
            while tick < t {
                pipeline.end_tick(base + tick)?;
                max_tick_spend = max_tick_spend.max(tick_spend);
                tick_spend = Money::ZERO;
                tick += 1;
            }
            let bidder = j % bidders;
            if pipeline.is_stopped(bidder, id) {
                continue;
            }
            eligible += 1;
            let served = serve(req, &tables[bidder], &model.win_rate_curve, id, cost, d);
            if served.participated {
                participations += 1;
                row.participations += 1;
            }
            if let Some(event) = served.event {
                row.spent += event.cost;
                row.impressions += 1;
                row.clicks += event.clicked as u64;
                tick_spend += event.cost;
                pipeline.enqueue(bidder, &event, base + tick)?;
            }
        }
        while tick < ticks {
            pipeline.end_tick(base + tick)?;
            max_tick_spend = max_tick_spend.max(tick_spend);
            tick_spend = Money::ZERO;
            tick += 1;
        }
        truth.add(&Totals { spend: row.spent, impressions: row.impressions, clicks: row.clicks });
        rows.push(row);

        if quick_stop_tick.is_none() {
            if let Some(notice) = pipeline.notices.first() {
                quick_stop_tick = Some(notice.issued_at);
                pacer.stop();
            }
        }
        pacer.end_of_slot(&pipeline.slot_report(id, slot))?;
        push_failures += pipeline.push_rates(id, &pacer.rate_table()).failures.len();
    }
    let end = spec.num_slots() as u64 * ticks;
    pipeline.drain(end)?;
    pipeline.finish()?;

    let stored = pipeline.store.total(id);
    if stored != truth {
        return Err(PacingError::Invariant(format!("store totals {stored:?} differ from delivered {truth:?}")));
    }
    let record = SpendingRecord::new(rows.iter().map(|r| r.spent).collect())?;
    if record.total() != truth.spend {
        return Err(PacingError::Invariant("per-slot spend does not add up to total spend".into()));
    }
    let omega = penalty(&record, spec)?;
    Ok(RunArtifacts {
        label: pacer.label(),
        seed: rng.seed,
        budget: spec.budget,
        avg_err: avg_err(omega, spec)?,
        omega,
        rows,
        totals: truth,
        participations,
        eligible,
        max_tick_spend,
        feedback_delay_ticks: opts.pipeline.feedback_delay_ticks(),
        quick_stop_tick,
        push_failures,
        batches: pipeline.batches_delivered(),
    })
}
