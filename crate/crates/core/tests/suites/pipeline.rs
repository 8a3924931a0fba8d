//! Feedback pipeline contracts: lossless aggregation, micro-aggregation,
//! recovery, ordering and quick stop.

use std::collections::BTreeMap;
use std::time::Instant;

use pacing::pipeline::concurrent::{run_sequential, run_threaded, EventStream};
use pacing::pipeline::{
    read_event_log, AggregateStore, ApplyOutcome, Batch, FaultPlan, Journal, Pipeline, PipelineConfig, Producer, ProducerId,
    Retention,
};
use pacing::sim::{generate_slot, serve, DeliveryEvent, DrawSource};
use pacing::{
    run_campaign, CampaignId, CampaignSpec, CtrBucket, Money, Pacer, RateTable, RngSpec, RunOptions, SlotReport, Totals,
    TrafficModel,
};
use rand::seq::SliceRandom;
use rand::Rng;

use super::Check;
use crate::common::*;

pub const ID: CampaignId = CampaignId(1);
pub const SLOTS: usize = 24;
pub const TICKS: u64 = 15;

/// One seeded day of deliveries at fixed layered rates, timestamped and
/// dealt to bidders the way the simulator does it.
pub struct Day {
    pub events: Vec<(u64, usize, DeliveryEvent)>,
    pub boundaries: Vec<f64>,
}

pub fn seeded_day(seed: u64, requests: u64, bidders: usize) -> Day {
    let model = TrafficModel::default_day(requests, SLOTS).unwrap();
    let table = RateTable { boundaries: vec![3e-4, 1e-3], rates: vec![0.3, 0.7, 1.0] };
    let rng = RngSpec::new(seed);
    let cost = Money::from_units(5.0).per_impression();
    let counts = model.slot_request_counts();
    let mut events = Vec::new();
    for slot in 0..SLOTS {
        let reqs = generate_slot(&model, slot, counts[slot], &rng);
        let mut draws = DrawSource::for_slot(&rng, slot);
        let n = reqs.len() as u64;
        for (j, req) in reqs.iter().enumerate() {
            let d = draws.next_draws();
            if let Some(ev) = serve(req, &table, &model.win_rate_curve, ID, cost, d).event {
                events.push((slot as u64 * TICKS + j as u64 * TICKS / n, j % bidders, ev));
            }
        }
    }
    Day { events, boundaries: table.boundaries }
}

/// Ground truth per slot and response-rate bucket.
fn truth(day: &Day) -> BTreeMap<u32, BTreeMap<CtrBucket, Totals>> {
    let mut out: BTreeMap<u32, BTreeMap<CtrBucket, Totals>> = BTreeMap::new();
    for (_, _, ev) in &day.events {
        let t = Totals { spend: ev.cost, impressions: 1, clicks: ev.clicked as u64 };
        out.entry(ev.slot as u32).or_default().entry(CtrBucket::from_ctr(ev.predicted_ctr)).or_default().add(&t);
    }
    out
}

/// Feeds `day` through a pipeline, calling `at_tick` after every tick, and
/// returns the reports a controller would have read at each slot end.
fn drive(
    day: &Day,
    cfg: &PipelineConfig,
    mut at_tick: impl FnMut(u64, &Pipeline),
) -> Result<(Vec<SlotReport>, Pipeline), String> {
    let mut p = Pipeline::new(cfg.clone(), FaultPlan::default()).map_err(|e| e.to_string())?;
    p.register(ID, Money::from_units(1e9));
    let mut reports = Vec::new();
    let mut next = 0;
    for tick in 0..SLOTS as u64 * TICKS {
        while next < day.events.len() && day.events[next].0 == tick {
            let (_, bidder, ev) = &day.events[next];
            p.enqueue(*bidder, ev, tick).map_err(|e| e.to_string())?;
            next += 1;
        }
        p.end_tick(tick).map_err(|e| e.to_string())?;
        at_tick(tick, &p);
        if (tick + 1) % TICKS == 0 {
            reports.push(p.slot_report(ID, (tick / TICKS) as usize));
        }
    }
    p.drain(SLOTS as u64 * TICKS).map_err(|e| e.to_string())?;
    Ok((reports, p))
}

pub fn lossless_aggregation(day: &Day) -> Check {
    let want = truth(day);
    let mut grand = Totals::default();
    for slot in want.values() {
        for t in slot.values() {
            grand.add(t);
        }
    }
    for (window, micro) in [(1, true), (1, false), (SLOTS as u32, true), (SLOTS as u32, false)] {
        let cfg = PipelineConfig { window_slots: window, micro_aggregation: micro, max_batch: 64, ..Default::default() };
        let (_, p) = drive(day, &cfg, |_, _| {})?;
        ensure!(p.store.total(ID) == grand, "window {window} micro {micro}: store {:?} vs truth {grand:?}", p.store.total(ID));
        let agg = p.store.campaign(ID).ok_or("campaign missing from the store")?;
        for (slot, buckets) in &want {
            let mut t = Totals::default();
            buckets.values().for_each(|b| t.add(b));
            ensure!(agg.slot_totals(*slot) == t, "window {window}: slot {slot} totals {:?} vs {t:?}", agg.slot_totals(*slot));
            if window == SLOTS as u32 {
                ensure!(agg.recent.get(slot) == Some(buckets), "slot {slot}: bucket detail differs from truth");
            }
        }
    }
    Ok(format!("{} deliveries aggregated exactly ({} impressions)", day.events.len(), grand.impressions))
}

pub fn micro_aggregation_lossless(day: &Day) -> Check {
    let run = |micro| {
        let cfg = PipelineConfig { micro_aggregation: micro, max_batch: 64, ..Default::default() };
        drive(day, &cfg, |_, _| {})
    };
    let (on, p_on) = run(true)?;
    let (off, p_off) = run(false)?;
    for (slot, (a, b)) in on.iter().zip(&off).enumerate() {
        let (la, lb) = (a.per_layer(&day.boundaries), b.per_layer(&day.boundaries));
        for (l, (x, y)) in la.iter().zip(&lb).enumerate() {
            ensure!(x.totals == y.totals, "slot {slot} layer {l}: {:?} with aggregation, {:?} without", x.totals, y.totals);
        }
    }
    ensure!(p_on.store.campaigns == p_off.store.campaigns, "final stores differ with and without aggregation");
    let messages = |micro| producer_batches(day, 4, 64, micro).iter().flatten().map(|(_, b)| b.messages.len()).sum::<usize>();
    let (merged, raw) = (messages(true), messages(false));
    ensure!(merged < raw, "aggregation did not merge any messages");
    Ok(format!("per-layer totals identical over {} slot reports ({merged} vs {raw} messages)", on.len()))
}

pub fn recovery_equivalence(day: &Day, seed: u64) -> Check {
    let mut r = rng(seed);
    let end = SLOTS as u64 * TICKS;
    let mut crash_ticks: Vec<u64> = (0..10).map(|_| r.random_range(0..end)).collect();
    crash_ticks.sort_unstable();
    crash_ticks.dedup();

    // full retention: recover afterwards from the kept snapshots
    let cfg = PipelineConfig { retention: Retention::Full, snapshot_every: 7, max_batch: 40, ..Default::default() };
    let mut captured = BTreeMap::new();
    let (_, p) = drive(day, &cfg, |t, p| {
        if crash_ticks.contains(&t) {
            captured.insert(t, p.store.clone());
        }
    })?;
    for (t, live) in &captured {
        let recovered = p.journal.recover_at(*t).map_err(|e| e.to_string())?;
        ensure!(recovered == *live, "crash at tick {t}: snapshot+replay differs from the live store");
        // independent reference: replay the whole log onto the empty store
        let replayed = p.journal.recover_from(0, p.journal.log.end_at_tick(*t)).map_err(|e| e.to_string())?;
        ensure!(replayed == *live, "crash at tick {t}: full replay differs from the live store");
    }

    // latest-only retention: recover at the crash itself
    let cfg = PipelineConfig { snapshot_every: 5, max_batch: 40, ..Default::default() };
    let mut failures = Vec::new();
    drive(day, &cfg, |t, p| {
        if crash_ticks.contains(&t) && p.journal.recover_at(t).ok().as_ref() != Some(&p.store) {
            failures.push(t);
        }
    })?;
    ensure!(failures.is_empty(), "latest-snapshot recovery failed at ticks {failures:?}");
    Ok(format!("{} crash points recovered exactly, with full and latest-only retention", captured.len()))
}

/// Batches each bidder would send for `day`, in creation order.
fn producer_batches(day: &Day, bidders: usize, max_batch: usize, micro: bool) -> Vec<Vec<(u64, Batch)>> {
    let mut producers: Vec<Producer> =
        (0..bidders).map(|i| Producer::new(ProducerId(i as u32), max_batch, 1, micro)).collect();
    let mut out = vec![Vec::new(); bidders];
    for (tick, bidder, ev) in &day.events {
        if let Some(b) = producers[bidder % bidders].enqueue(ev, *tick) {
            out[bidder % bidders].push((*tick, b));
        }
    }
    for (i, p) in producers.iter_mut().enumerate() {
        if let Some(b) = p.flush(u64::MAX) {
            out[i].push((u64::MAX, b));
        }
    }
    out
}

/// Crash partway through a batch: it reached the log but not the store.
pub fn crash_mid_batch(day: &Day) -> Check {
    let batches: Vec<(u64, Batch)> = producer_batches(day, 1, 50, true).remove(0);
    ensure!(batches.len() > 10, "day too small for the crash test");
    let mut store = AggregateStore::new(1);
    let mut journal = Journal::new(4, Retention::Latest, &store);
    let crash = batches.len() / 2 + 1;
    for (i, (tick, b)) in batches.iter().enumerate() {
        journal.record(i as u64, b);
        if i == crash {
            let recovered = journal.recover_at(i as u64).map_err(|e| e.to_string())?;
            let mut reference = AggregateStore::new(1);
            for (_, b) in &batches[..=i] {
                reference.aggregate(b).map_err(|e| e.to_string())?;
            }
            ensure!(recovered == reference, "mid-batch crash at batch {i} (tick {tick}) recovers a different store");
            return Ok(format!("crash between log append and apply of batch {i} recovers the replay reference"));
        }
        store.aggregate(b).map_err(|e| e.to_string())?;
        journal.after_apply(i as u64, &store);
    }
    Err("crash point never reached".into())
}

pub fn interleaving_commutes(day: &Day, seed: u64) -> Check {
    let per_producer = producer_batches(day, 4, 30, true);
    let mut reference = AggregateStore::new(SLOTS as u32);
    for (_, b) in per_producer.iter().flatten() {
        reference.aggregate(b).map_err(|e| e.to_string())?;
    }
    let mut r = rng(seed);
    for trial in 0..5 {
        // random merge that keeps each producer's order
        let mut order: Vec<usize> = per_producer.iter().enumerate().flat_map(|(i, v)| vec![i; v.len()]).collect();
        order.shuffle(&mut r);
        let mut cursor = vec![0; per_producer.len()];
        let mut store = AggregateStore::new(SLOTS as u32);
        for p in order {
            let (_, b) = &per_producer[p][cursor[p]];
            cursor[p] += 1;
            store.aggregate(b).map_err(|e| e.to_string())?;
            if trial == 0 {
                // redelivery of the same batch changes nothing
                let before = store.clone();
                let again = store.aggregate(b).map_err(|e| e.to_string())?;
                ensure!(again == ApplyOutcome::Duplicate && store == before, "redelivered batch was applied twice");
            }
        }
        ensure!(store == reference, "interleaving {trial} produced a different store");
    }

    // reversed arrival per producer: everything is held, then drains
    let mut store = AggregateStore::new(SLOTS as u32);
    for batches in &per_producer {
        for (_, b) in batches.iter().rev() {
            store.aggregate(b).map_err(|e| e.to_string())?;
        }
    }
    ensure!(store == reference, "out-of-order arrival produced a different store");
    Ok("five interleavings, redelivery and reversed arrival all give the same store".into())
}

pub fn threaded_matches_sequential(day: &Day) -> Check {
    let mut streams: Vec<EventStream> = vec![Vec::new(); 4];
    for (tick, bidder, ev) in &day.events {
        streams[*bidder].push((*tick, *ev));
    }
    let cfg = PipelineConfig { max_batch: 30, window_slots: SLOTS as u32, ..Default::default() };
    let seq = run_sequential(&streams, &cfg).map_err(|e| e.to_string())?;
    for round in 0..3 {
        let thr = run_threaded(&streams, &cfg).map_err(|e| e.to_string())?;
        ensure!(thr == seq, "threaded schedule {round} differs from the sequential one");
    }
    Ok("threaded and sequential schedules build identical stores".into())
}

/// Serves at full rate and never paces, so only quick stop holds spend.
pub struct FullRate {
    stopped: bool,
}

impl FullRate {
    pub fn new() -> Self {
        Self { stopped: false }
    }
}

impl Pacer for FullRate {
    fn label(&self) -> String {
        "full-rate".into()
    }
    fn rate_table(&self) -> RateTable {
        RateTable::uniform(if self.stopped { 0.0 } else { 1.0 })
    }
    fn end_of_slot(&mut self, _report: &SlotReport) -> pacing::Result<()> {
        Ok(())
    }
    fn stop(&mut self) {
        self.stopped = true;
    }
}

pub fn quick_stop_bound(dir: &std::path::Path) -> Check {
    let model = TrafficModel::default_day(400_000, SLOTS).unwrap();
    let budget = Money::from_units(150.0);
    let spec = CampaignSpec::even(ID, budget, Money::from_units(5.0), None, SLOTS).unwrap();
    let mut worst = 0.0f64;
    let cases = [(1, 0, 500), (2, 0, 500), (1, 1, 500), (1, 3, 500), (3, 2, 500), (2, 1, 20)];
    for (i, (flush, transit, max_batch)) in cases.into_iter().enumerate() {
        let log = dir.join(format!("quick-stop-{i}.log"));
        let opts = RunOptions {
            ticks_per_slot: TICKS,
            pipeline: PipelineConfig {
                flush_timeout_ticks: flush,
                transit_delay_ticks: transit,
                max_batch,
                ..Default::default()
            },
            event_log: Some(log.clone()),
            ..Default::default()
        };
        let a = run_campaign(&spec, &model, &mut FullRate::new(), RngSpec::new(7 + i as u64), &opts)
            .map_err(|e| e.to_string())?;
        let stop = a.quick_stop_tick.ok_or(format!("case {i}: budget never reached"))?;
        ensure!(a.feedback_delay_ticks == flush + transit, "case {i}: delay {} ticks", a.feedback_delay_ticks);
        ensure!(
            a.overshoot() <= a.overshoot_bound(),
            "case {i}: overshoot {} above bound {} (d={}, s={})",
            a.overshoot(),
            a.overshoot_bound(),
            a.feedback_delay_ticks,
            a.max_tick_spend
        );
        worst = worst.max(a.overshoot().to_units() / a.overshoot_bound().to_units().max(1e-12));

        // nothing participates once every bidder acknowledged the stop
        let stop_slot = (stop / TICKS) as usize;
        for row in &a.rows[stop_slot + 1..] {
            ensure!(row.participations == 0 && row.spent == Money::ZERO, "case {i}: slot {} served after the stop", row.slot);
        }
        let records = read_event_log(&log).map_err(|e| e.to_string())?;
        let logged: Money = records.iter().map(|r| r.message.cost).sum();
        ensure!(logged == a.totals.spend, "case {i}: event log holds {logged}, deliveries {}", a.totals.spend);
        let late = records.iter().filter(|r| r.message.slot as usize > stop_slot).count();
        ensure!(late == 0, "case {i}: {late} logged deliveries from slots after the stop");
    }
    Ok(format!("{} delay settings keep overshoot within d*s (worst {:.0}% of bound)", cases.len(), worst * 100.0))
}

pub fn run(dir: &std::path::Path) -> Check {
    let start = Instant::now();
    let day = seeded_day(5, 300_000, 4);
    let parts = [
        lossless_aggregation(&day)?,
        micro_aggregation_lossless(&day)?,
        recovery_equivalence(&day, 31)?,
        crash_mid_batch(&day)?,
        interleaving_commutes(&day, 32)?,
        threaded_matches_sequential(&day)?,
        quick_stop_bound(dir)?,
    ];
    let elapsed = start.elapsed();
    ensure!(elapsed.as_secs_f64() < 60.0, "pipeline suite took {elapsed:?}");
    Ok(format!("{} ({:.2}s)", parts.join("; "), elapsed.as_secs_f64()))
}
