//! Delivery messages and the producer-side batcher.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::money::Money;
use crate::plan::CampaignId;
use crate::sim::DeliveryEvent;
use crate::slot::{CtrBucket, Totals};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProducerId(pub u32);

/// Aggregated deliveries of one campaign in one response-rate bucket.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveryMessage {
    pub campaign: CampaignId,
    pub slot: u32,
    pub bucket: CtrBucket,
    pub cost: Money,
    pub clicks: u64,
    pub impressions: u64,
    pub seq: u64,
}

impl DeliveryMessage {
    pub fn totals(&self) -> Totals {
        Totals { spend: self.cost, impressions: self.impressions, clicks: self.clicks }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Batch {
    pub producer: ProducerId,
    pub messages: Vec<DeliveryMessage>,
    pub created_at: u64,
}

impl Batch {
    pub fn first_seq(&self) -> u64 {
        self.messages[0].seq
    }

    pub fn last_seq(&self) -> u64 {
        self.messages[self.messages.len() - 1].seq
    }

    pub fn spend(&self) -> Money {
        self.messages.iter().map(|m| m.cost).sum()
    }
}

type Key = (CampaignId, u32, CtrBucket);

#[derive(Clone, Debug)]
enum Buffer {
    Aggregated(BTreeMap<Key, Totals>),
    Raw(Vec<(Key, Totals)>),
}

impl Buffer {
    fn len(&self) -> usize {
        match self {
            Buffer::Aggregated(m) => m.len(),
            Buffer::Raw(v) => v.len(),
        }
    }
}

/// Per-bidder batcher. Messages are sequenced when the batch is cut, so
/// sequence numbers are strictly increasing per producer and contiguous
/// across batches.
#[derive(Clone, Debug)]
pub struct Producer {
    pub id: ProducerId,
    max_batch: usize,
    flush_timeout_ticks: u64,
    buffer: Buffer,
    opened_at: Option<u64>,
    next_seq: u64,
}

impl Producer {
    pub fn new(id: ProducerId, max_batch: usize, flush_timeout_ticks: u64, micro_aggregation: bool) -> Self {
        Self {
            id,
            max_batch: max_batch.max(1),
            flush_timeout_ticks: flush_timeout_ticks.max(1),
            buffer: if micro_aggregation { Buffer::Aggregated(BTreeMap::new()) } else { Buffer::Raw(Vec::new()) },
            opened_at: None,
            next_seq: 1,
        }
    }

    pub fn pending(&self) -> usize {
        self.buffer.len()
    }

    /// Buffers a delivery. Returns a batch when the buffer reached its size
    /// limit.
    pub fn enqueue(&mut self, event: &DeliveryEvent, tick: u64) -> Option<Batch> {
        let key = (event.campaign, event.slot as u32, CtrBucket::from_ctr(event.predicted_ctr));
        let t = Totals { spend: event.cost, impressions: 1, clicks: event.clicked as u64 };
        self.opened_at.get_or_insert(tick);
        match &mut self.buffer {
            Buffer::Aggregated(m) => m.entry(key).or_default().add(&t),
            Buffer::Raw(v) => v.push((key, t)),
        }
        (self.buffer.len() >= self.max_batch).then(|| self.cut(tick))
    }

    /// Flushes the buffer if it has been open for the flush timeout as of
    /// the end of `tick`.
    pub fn end_tick(&mut self, tick: u64) -> Option<Batch> {
        let opened = self.opened_at?;
        (tick + 1 >= opened + self.flush_timeout_ticks).then(|| self.cut(tick))
    }

    /// Flushes whatever is buffered.
    pub fn flush(&mut self, tick: u64) -> Option<Batch> {
        (self.buffer.len() > 0).then(|| self.cut(tick))
    }

    fn cut(&mut self, tick: u64) -> Batch {
        self.opened_at = None;
        let entries: Vec<(Key, Totals)> = match &mut self.buffer {
            Buffer::Aggregated(m) => std::mem::take(m).into_iter().collect(),
            Buffer::Raw(v) => std::mem::take(v),
        };
        let messages = entries
            .into_iter()
            .map(|((campaign, slot, bucket), t)| {
                let seq = self.next_seq;
                self.next_seq += 1;
                DeliveryMessage {
                    campaign,
                    slot,
                    bucket,
                    cost: t.spend,
                    clicks: t.clicks,
                    impressions: t.impressions,
                    seq,
                }
            })
            .collect();
        Batch { producer: self.id, messages, created_at: tick }
    }
}
