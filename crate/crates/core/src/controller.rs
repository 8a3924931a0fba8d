//! The interface the simulator drives controllers through.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::layered::classify;
use crate::slot::SlotReport;

/// The rates bidders apply during a slot: layer boundaries plus one
/// participation probability per layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateTable {
    pub boundaries: Vec<f64>,
    pub rates: Vec<f64>,
}

impl RateTable {
    pub fn uniform(rate: f64) -> Self {
        Self { boundaries: Vec::new(), rates: vec![rate] }
    }

    pub fn stopped() -> Self {
        Self::uniform(0.0)
    }

    pub fn layer_of(&self, ctr: f64) -> usize {
        classify(ctr, &self.boundaries).min(self.rates.len() - 1)
    }

    pub fn rate_for(&self, ctr: f64) -> f64 {
        self.rates[self.layer_of(ctr)]
    }
}

/// A pacing controller as seen by the delivery loop.
pub trait Pacer: Send {
    fn label(&self) -> String;

    /// Rates to serve with until the next slot boundary.
    fn rate_table(&self) -> RateTable;

    /// Consumes the aggregated feedback for the slot that just ended.
    fn end_of_slot(&mut self, report: &SlotReport) -> Result<()>;

    /// Budget exhausted; rates go to zero and stay there.
    fn stop(&mut self);
}
