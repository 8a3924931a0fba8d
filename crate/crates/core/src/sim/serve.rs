//! Serving a single request: participate, win, bill, click.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::rng::{Concern, RngSpec};
use super::traffic::{TrafficModel, WinRateCurve};
use crate::controller::RateTable;
use crate::money::Money;
use crate::plan::CampaignId;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdRequest {
    pub slot: usize,
    pub predicted_ctr: f64,
    pub sequence: u64,
}

/// A won impression.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeliveryEvent {
    pub campaign: CampaignId,
    pub slot: usize,
    pub layer: usize,
    pub cost: Money,
    pub clicked: bool,
    pub predicted_ctr: f64,
}

/// The uniforms one request consumes. They are drawn whether or not the
/// request gets that far, which keeps runs with different controllers on
/// common random numbers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Draws {
    pub participate: f64,
    pub win: f64,
    pub click: f64,
}

/// Requests for one slot with their CTRs drawn from the model's histogram.
pub fn generate_slot(model: &TrafficModel, slot: usize, count: u64, rng: &RngSpec) -> Vec<AdRequest> {
    let sampler = model.ctr_sampler();
    let mut ctr_rng = rng.stream(Concern::Ctr, slot as u64);
    (0..count)
        .map(|sequence| AdRequest { slot, predicted_ctr: sampler.sample(&mut ctr_rng), sequence })
        .collect()
}

/// Per-request uniforms for one slot, one stream per concern.
pub struct DrawSource {
    participate: rand_chacha::ChaCha8Rng,
    win: rand_chacha::ChaCha8Rng,
    click: rand_chacha::ChaCha8Rng,
}

impl DrawSource {
    pub fn for_slot(rng: &RngSpec, slot: usize) -> Self {
        Self {
            participate: rng.stream(Concern::Participation, slot as u64),
            win: rng.stream(Concern::Win, slot as u64),
            click: rng.stream(Concern::Click, slot as u64),
        }
    }

    pub fn next_draws(&mut self) -> Draws {
        Draws { participate: self.participate.random(), win: self.win.random(), click: self.click.random() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Served {
    pub participated: bool,
    pub event: Option<DeliveryEvent>,
}

/// Participates with the layer's rate, wins with the curve's probability,
/// and on a win bills one impression and clicks with the predicted CTR.
pub fn serve(
    request: &AdRequest,
    table: &RateTable,
    win_curve: &WinRateCurve,
    campaign: CampaignId,
    impression_cost: Money,
    draws: Draws,
) -> Served {
    let layer = table.layer_of(request.predicted_ctr);
    let participated = draws.participate < table.rates[layer];
    if !participated || draws.win >= win_curve.eval(request.predicted_ctr) {
        return Served { participated, event: None };
    }
    Served {
        participated,
        event: Some(DeliveryEvent {
            campaign,
            slot: request.slot,
            layer,
            cost: impression_cost,
            clicked: draws.click < request.predicted_ctr,
            predicted_ctr: request.predicted_ctr,
        }),
    }
}
