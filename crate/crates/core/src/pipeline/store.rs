//! The in-memory data source the controllers read feedback from.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::message::{Batch, ProducerId};
use crate::error::{PacingError, Result};
use crate::plan::CampaignId;
use crate::slot::{CtrBucket, SlotReport, Totals};

/// Aggregates for one campaign. The most recent `window_slots` slots keep
/// per-bucket detail; older slots are folded into per-slot totals.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignAggregate {
    pub recent: BTreeMap<u32, BTreeMap<CtrBucket, Totals>>,
    pub history: BTreeMap<u32, Totals>,
    pub total: Totals,
    latest_slot: u32,
}

impl CampaignAggregate {
    fn add(&mut self, slot: u32, bucket: CtrBucket, t: &Totals, window_slots: u32) {
        self.total.add(t);
        if slot > self.latest_slot {
            self.latest_slot = slot;
        }
        let oldest_kept = (self.latest_slot + 1).saturating_sub(window_slots);
        if slot < oldest_kept {
            self.history.entry(slot).or_default().add(t);
        } else {
            self.recent.entry(slot).or_default().entry(bucket).or_default().add(t);
        }
        while let Some(entry) = self.recent.first_entry() {
            if *entry.key() >= oldest_kept {
                break;
            }
            let (old, buckets) = entry.remove_entry();
            let folded = self.history.entry(old).or_default();
            for b in buckets.values() {
                folded.add(b);
            }
        }
    }

    /// Totals of one slot, whether still detailed or already folded.
    pub fn slot_totals(&self, slot: u32) -> Totals {
        let mut t = self.history.get(&slot).copied().unwrap_or_default();
        if let Some(buckets) = self.recent.get(&slot) {
            for b in buckets.values() {
                t.add(b);
            }
        }
        t
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregateStore {
    pub window_slots: u32,
    pub campaigns: BTreeMap<CampaignId, CampaignAggregate>,
    /// Highest contiguous sequence number applied per producer.
    pub applied: BTreeMap<ProducerId, u64>,
    /// Batches that arrived ahead of a sequence gap, keyed by first sequence.
    pub held: BTreeMap<ProducerId, BTreeMap<u64, Batch>>,
}

/// What happened to a batch handed to [`AggregateStore::aggregate`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ApplyOutcome {
    /// Applied, together with any held batches it unblocked.
    Applied(Vec<CampaignId>),
    Duplicate,
    Held,
}

impl Default for AggregateStore {
    fn default() -> Self {
        Self::new(1)
    }
}

impl AggregateStore {
    pub fn new(window_slots: u32) -> Self {
        Self {
            window_slots: window_slots.max(1),
            campaigns: BTreeMap::new(),
            applied: BTreeMap::new(),
            held: BTreeMap::new(),
        }
    }

    /// Applies a batch in sequence order. Already-applied batches are
    /// ignored; a batch past a gap waits until the gap is filled.
    pub fn aggregate(&mut self, batch: &Batch) -> Result<ApplyOutcome> {
        if batch.messages.is_empty() {
            return Err(PacingError::Invariant("empty batch".into()));
        }
        if batch.messages.windows(2).any(|w| w[1].seq != w[0].seq + 1) {
            return Err(PacingError::Invariant(format!("batch from {:?} has non-contiguous sequences", batch.producer)));
        }
        let applied = self.applied.get(&batch.producer).copied().unwrap_or(0);
        if batch.last_seq() <= applied {
            return Ok(ApplyOutcome::Duplicate);
        }
        if batch.first_seq() <= applied {
            return Err(PacingError::Invariant(format!(
                "batch {}..={} from {:?} overlaps applied sequence {applied}",
                batch.first_seq(),
                batch.last_seq(),
                batch.producer
            )));
        }
        if batch.first_seq() > applied + 1 {
            self.held.entry(batch.producer).or_default().insert(batch.first_seq(), batch.clone());
            return Ok(ApplyOutcome::Held);
        }
        let mut touched = Vec::new();
        self.apply_unchecked(batch, &mut touched);
        // drain any held batches that are now contiguous
        loop {
            let next = self.applied[&batch.producer] + 1;
            let Some(queue) = self.held.get_mut(&batch.producer) else { break };
            let Some(b) = queue.remove(&next) else { break };
            if queue.is_empty() {
                self.held.remove(&batch.producer);
            }
            self.apply_unchecked(&b, &mut touched);
        }
        touched.sort();
        touched.dedup();
        Ok(ApplyOutcome::Applied(touched))
    }

    fn apply_unchecked(&mut self, batch: &Batch, touched: &mut Vec<CampaignId>) {
        for m in &batch.messages {
            self.campaigns.entry(m.campaign).or_default().add(m.slot, m.bucket, &m.totals(), self.window_slots);
            touched.push(m.campaign);
        }
        self.applied.insert(batch.producer, batch.last_seq());
    }

    pub fn campaign(&self, id: CampaignId) -> Option<&CampaignAggregate> {
        self.campaigns.get(&id)
    }

    pub fn total(&self, id: CampaignId) -> Totals {
        self.campaign(id).map(|c| c.total).unwrap_or_default()
    }

    /// Feedback for one slot as a controller sees it.
    pub fn slot_report(&self, id: CampaignId, slot: usize) -> SlotReport {
        let Some(c) = self.campaign(id) else {
            return SlotReport { slot, buckets: Vec::new(), cumulative_spend: Default::default() };
        };
        let buckets = c
            .recent
            .get(&(slot as u32))
            .map(|b| b.iter().map(|(k, t)| (*k, *t)).collect())
            .unwrap_or_default();
        SlotReport { slot, buckets, cumulative_spend: c.total.spend }
    }
}
