//! Per-slot delivery aggregates shared by the pipeline and the controllers.

use serde::{Deserialize, Serialize};

use crate::layered::classify;
use crate::money::Money;

/// Predicted response rate quantized to 1e-7.
///
/// Deliveries with the same bucket are indistinguishable to the controller,
/// which is what makes micro-aggregation lossless.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CtrBucket(pub u32);

impl CtrBucket {
    pub const SCALE: f64 = 1e7;

    pub fn from_ctr(ctr: f64) -> Self {
        CtrBucket((ctr * Self::SCALE).round().clamp(0.0, u32::MAX as f64) as u32)
    }

    pub fn ctr(self) -> f64 {
        self.0 as f64 / Self::SCALE
    }

    /// Rounds `ctr` onto the bucket grid.
    pub fn quantize(ctr: f64) -> f64 {
        Self::from_ctr(ctr).ctr()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Totals {
    pub spend: Money,
    pub impressions: u64,
    pub clicks: u64,
}

impl Totals {
    pub fn add(&mut self, other: &Totals) {
        self.spend += other.spend;
        self.impressions += other.impressions;
        self.clicks += other.clicks;
    }
}

/// Delivery totals for one layer, including the impression-weighted sum of
/// predicted CTR so callers can estimate the layer's response rate.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LayerTotals {
    pub totals: Totals,
    pub ctr_sum: f64,
}

/// What the controller learns about one slot.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SlotReport {
    pub slot: usize,
    /// Totals per response-rate bucket, ascending by bucket.
    pub buckets: Vec<(CtrBucket, Totals)>,
    /// Campaign spend through the end of this slot, as seen by the data
    /// source.
    pub cumulative_spend: Money,
}

impl SlotReport {
    pub fn total(&self) -> Totals {
        let mut t = Totals::default();
        for (_, b) in &self.buckets {
            t.add(b);
        }
        t
    }

    /// Groups bucket totals into layers delimited by `boundaries`.
    pub fn per_layer(&self, boundaries: &[f64]) -> Vec<LayerTotals> {
        let mut out = vec![LayerTotals::default(); boundaries.len() + 1];
        for (bucket, t) in &self.buckets {
            let l = classify(bucket.ctr(), boundaries);
            out[l].totals.add(t);
            out[l].ctr_sum += bucket.ctr() * t.impressions as f64;
        }
        out
    }

    /// Observed (rate, impressions) pairs, the input to boundary derivation.
    pub fn impression_histogram(&self) -> Vec<(f64, u64)> {
        self.buckets
            .iter()
            .filter(|(_, t)| t.impressions > 0)
            .map(|(b, t)| (b.ctr(), t.impressions))
            .collect()
    }
}
