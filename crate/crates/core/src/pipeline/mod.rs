//! In-process model of the feedback path from bidders back to the
//! controllers, on a virtual clock.
//!
//! Bidders hand delivery events to per-bidder producers, which
//! micro-aggregate and batch them. Batches travel through an asynchronous
//! queue with a configurable transit delay to a single consumer that owns
//! the aggregate store, journals every batch, and takes periodic snapshots.
//! Rate updates and quick stops go the other way synchronously.

pub mod concurrent;
pub mod eventlog;
pub mod log;
pub mod message;
pub mod rpc;
pub mod store;

use std::collections::VecDeque;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use self::eventlog::{read_event_log, EventLogWriter, EventRecord};
pub use self::log::{recover, CommitLog, Journal, LogEntry, Retention, Snapshot};
pub use self::message::{Batch, DeliveryMessage, Producer, ProducerId};
pub use self::rpc::{check_quick_stop, BidderId, Fleet, FaultPlan, PushOutcome, QuickStopGuard, QuickStopNotice, RateBoard};
pub use self::store::{AggregateStore, ApplyOutcome, CampaignAggregate};

use crate::controller::RateTable;
use crate::error::{PacingError, Result};
use crate::money::Money;
use crate::plan::CampaignId;
use crate::sim::DeliveryEvent;
use crate::slot::SlotReport;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub max_batch: usize,
    /// Ticks a producer buffer may stay open; 1 flushes at the end of the
    /// tick it was opened in.
    pub flush_timeout_ticks: u64,
    pub transit_delay_ticks: u64,
    pub micro_aggregation: bool,
    /// Slots of per-bucket detail the store keeps.
    pub window_slots: u32,
    /// Batches between snapshots; 0 keeps only the initial one.
    pub snapshot_every: u64,
    pub retention: Retention,
    pub num_bidders: usize,
    pub push_retries: u32,
    pub quick_stop: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            max_batch: 500,
            flush_timeout_ticks: 1,
            transit_delay_ticks: 0,
            micro_aggregation: true,
            window_slots: 1,
            snapshot_every: 256,
            retention: Retention::Latest,
            num_bidders: 4,
            push_retries: 2,
            quick_stop: true,
        }
    }
}

impl PipelineConfig {
    /// Worst-case ticks between a delivery and its arrival in the store.
    pub fn feedback_delay_ticks(&self) -> u64 {
        self.flush_timeout_ticks.max(1) + self.transit_delay_ticks
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |path: &str, message: &str| Err(PacingError::Config { path: format!("pipeline.{path}"), message: message.into() });
        if self.max_batch == 0 {
            return bad("max_batch", "must be positive");
        }
        if self.flush_timeout_ticks == 0 {
            return bad("flush_timeout_ticks", "must be positive");
        }
        if self.num_bidders == 0 {
            return bad("num_bidders", "must be positive");
        }
        if self.window_slots == 0 {
            return bad("window_slots", "must be positive");
        }
        Ok(())
    }
}

pub struct Pipeline {
    pub cfg: PipelineConfig,
    producers: Vec<Producer>,
    in_flight: VecDeque<(u64, Batch)>,
    pub store: AggregateStore,
    pub journal: Journal,
    pub fleet: Fleet,
    pub guard: QuickStopGuard,
    pub notices: Vec<QuickStopNotice>,
    event_log: Option<EventLogWriter>,
    batches_delivered: u64,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig, faults: FaultPlan) -> Result<Self> {
        cfg.validate()?;
        let store = AggregateStore::new(cfg.window_slots);
        Ok(Self {
            producers: (0..cfg.num_bidders as u32)
                .map(|i| Producer::new(ProducerId(i), cfg.max_batch, cfg.flush_timeout_ticks, cfg.micro_aggregation))
                .collect(),
            in_flight: VecDeque::new(),
            journal: Journal::new(cfg.snapshot_every, cfg.retention, &store),
            store,
            fleet: Fleet::new(cfg.num_bidders, cfg.push_retries, faults),
            guard: QuickStopGuard::default(),
            notices: Vec::new(),
            event_log: None,
            batches_delivered: 0,
            cfg,
        })
    }

    pub fn with_event_log(mut self, path: &Path) -> Result<Self> {
        self.event_log = Some(EventLogWriter::create(path)?);
        Ok(self)
    }

    pub fn register(&mut self, campaign: CampaignId, budget: Money) {
        self.guard.register(campaign, budget);
    }

    pub fn num_bidders(&self) -> usize {
        self.producers.len()
    }

    pub fn batches_delivered(&self) -> u64 {
        self.batches_delivered
    }

    /// Hands a delivery from `bidder` to its producer.
    pub fn enqueue(&mut self, bidder: usize, event: &DeliveryEvent, tick: u64) -> Result<()> {
        if let Some(batch) = self.producers[bidder].enqueue(event, tick) {
            self.send(batch, tick)?;
        }
        Ok(())
    }

    /// Timeout flushes and queue deliveries due at the end of `tick`.
    pub fn end_tick(&mut self, tick: u64) -> Result<()> {
        for i in 0..self.producers.len() {
            if let Some(batch) = self.producers[i].end_tick(tick) {
                self.send(batch, tick)?;
            }
        }
        while self.in_flight.front().is_some_and(|(due, _)| *due <= tick) {
            let (_, batch) = self.in_flight.pop_front().unwrap();
            self.deliver(batch, tick)?;
        }
        Ok(())
    }

    /// Flushes every producer and delivers everything in flight.
    pub fn drain(&mut self, tick: u64) -> Result<()> {
        for i in 0..self.producers.len() {
            if let Some(batch) = self.producers[i].flush(tick) {
                self.in_flight.push_back((tick, batch));
            }
        }
        while let Some((_, batch)) = self.in_flight.pop_front() {
            self.deliver(batch, tick)?;
        }
        Ok(())
    }

    pub fn finish(&mut self) -> Result<()> {
        if let Some(w) = self.event_log.take() {
            w.finish()?;
        }
        Ok(())
    }

    fn send(&mut self, batch: Batch, tick: u64) -> Result<()> {
        let due = tick + self.cfg.transit_delay_ticks;
        if due <= tick {
            self.deliver(batch, tick)
        } else {
            self.in_flight.push_back((due, batch));
            Ok(())
        }
    }

    fn deliver(&mut self, batch: Batch, tick: u64) -> Result<()> {
        self.journal.record(tick, &batch);
        if let Some(w) = &mut self.event_log {
            w.append(&batch)?;
        }
        let outcome = self.store.aggregate(&batch)?;
        self.journal.after_apply(tick, &self.store);
        self.batches_delivered += 1;
        if let (ApplyOutcome::Applied(touched), true) = (outcome, self.cfg.quick_stop) {
            for c in touched {
                if let Some(mut notice) = check_quick_stop(&mut self.guard, &self.store, c, tick) {
                    self.fleet.deliver_quick_stop(&mut notice);
                    self.notices.push(notice);
                }
            }
        }
        Ok(())
    }

    pub fn push_rates(&mut self, campaign: CampaignId, table: &RateTable) -> PushOutcome {
        self.fleet.push_rates(campaign, table)
    }

    pub fn is_stopped(&self, bidder: usize, campaign: CampaignId) -> bool {
        self.fleet.is_stopped(bidder, campaign)
    }

    pub fn rates(&self, bidder: usize, campaign: CampaignId) -> RateTable {
        self.fleet.bidders[bidder].rates(campaign).map(|t| (*t).clone()).unwrap_or_else(RateTable::stopped)
    }

    pub fn slot_report(&self, campaign: CampaignId, slot: usize) -> SlotReport {
        self.store.slot_report(campaign, slot)
    }
}
