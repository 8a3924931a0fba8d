//! Request volume over the day, the predicted-CTR mix of requests, and the
//! chance of winning an auction at a given predicted CTR.

use rand::Rng;
use rand_distr::{weighted::WeightedAliasIndex, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{PacingError, Result};
use crate::money::largest_remainder;
use crate::slot::CtrBucket;

/// Piecewise-linear win probability over predicted CTR, flat outside the
/// first and last points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WinRateCurve {
    pub points: Vec<(f64, f64)>,
}

impl WinRateCurve {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        let curve = Self { points };
        curve.validate()?;
        Ok(curve)
    }

    pub fn constant(p: f64) -> Self {
        Self { points: vec![(0.0, p)] }
    }

    fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(PacingError::InvalidTraffic("win-rate curve has no points".into()));
        }
        if self.points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(PacingError::InvalidTraffic("win-rate curve x values must increase".into()));
        }
        if let Some((x, y)) = self.points.iter().find(|(x, y)| !(0.0..=1.0).contains(y) || !x.is_finite()) {
            return Err(PacingError::InvalidTraffic(format!("win rate {y} at ctr {x} is not a probability")));
        }
        Ok(())
    }

    pub fn eval(&self, ctr: f64) -> f64 {
        let pts = &self.points;
        let i = pts.partition_point(|(x, _)| *x <= ctr);
        if i == 0 {
            return pts[0].1;
        }
        if i == pts.len() {
            return pts[i - 1].1;
        }
        let (x0, y0) = pts[i - 1];
        let (x1, y1) = pts[i];
        y0 + (y1 - y0) * (ctr - x0) / (x1 - x0)
    }

    /// Every win rate multiplied by `factor`, capped at 1.
    pub fn scaled(&self, factor: f64) -> Self {
        Self { points: self.points.iter().map(|(x, y)| (*x, (y * factor).clamp(0.0, 1.0))).collect() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrafficModel {
    pub slot_weights: Vec<f64>,
    pub total_requests: u64,
    /// `(predicted ctr, probability mass)`; ctr values sit on the bucket grid.
    pub ctr_histogram: Vec<(f64, f64)>,
    pub win_rate_curve: WinRateCurve,
}

impl TrafficModel {
    /// Validates and snaps histogram values onto the bucket grid, merging
    /// values that land in the same bucket.
    pub fn new(
        slot_weights: Vec<f64>,
        total_requests: u64,
        ctr_histogram: Vec<(f64, f64)>,
        win_rate_curve: WinRateCurve,
    ) -> Result<Self> {
        let mut snapped: Vec<(f64, f64)> = Vec::with_capacity(ctr_histogram.len());
        let mut sorted = ctr_histogram;
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (ctr, mass) in sorted {
            let q = CtrBucket::quantize(ctr);
            match snapped.last_mut() {
                Some(last) if last.0 == q => last.1 += mass,
                _ => snapped.push((q, mass)),
            }
        }
        let model = Self { slot_weights, total_requests, ctr_histogram: snapped, win_rate_curve };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(PacingError::InvalidTraffic(m));
        if self.slot_weights.is_empty() {
            return bad("no slot weights".into());
        }
        if self.slot_weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return bad("slot weights must be finite and non-negative".into());
        }
        if self.slot_weights.iter().sum::<f64>() <= 0.0 {
            return bad("slot weights sum to zero".into());
        }
        if self.ctr_histogram.is_empty() {
            return bad("empty ctr histogram".into());
        }
        if let Some((c, _)) = self.ctr_histogram.iter().find(|(c, _)| !(*c > 0.0 && *c < 1.0)) {
            return bad(format!("predicted ctr {c} outside (0, 1)"));
        }
        if self.ctr_histogram.iter().any(|(_, m)| !(m.is_finite() && *m >= 0.0)) {
            return bad("histogram masses must be non-negative".into());
        }
        let mass: f64 = self.ctr_histogram.iter().map(|(_, m)| m).sum();
        if (mass - 1.0).abs() > 1e-9 {
            return bad(format!("histogram masses sum to {mass}"));
        }
        self.win_rate_curve.validate()
    }

    pub fn num_slots(&self) -> usize {
        self.slot_weights.len()
    }

    /// Requests per slot, proportional to the slot weights and summing to
    /// `total_requests` exactly.
    pub fn slot_request_counts(&self) -> Vec<u64> {
        largest_remainder(self.total_requests as i64, &self.slot_weights).into_iter().map(|c| c as u64).collect()
    }

    pub fn ctr_sampler(&self) -> CtrSampler {
        let (values, weights): (Vec<f64>, Vec<f64>) = self.ctr_histogram.iter().copied().unzip();
        CtrSampler { values, index: WeightedAliasIndex::new(weights).expect("validated histogram") }
    }

    /// Same model with each slot's weight perturbed by independent
    /// multiplicative Gaussian noise of relative size `sigma`.
    pub fn with_weight_noise(&self, sigma: f64, rng: &mut impl Rng) -> Self {
        let slot_weights = self
            .slot_weights
            .iter()
            .map(|w| {
                let z: f64 = rng.sample(StandardNormal);
                (w * (1.0 + sigma * z)).max(0.0)
            })
            .collect();
        Self { slot_weights, ..self.clone() }
    }

    /// Average fraction of requests won when participating in all of them.
    pub fn mean_win_rate(&self) -> f64 {
        self.ctr_histogram.iter().map(|(c, m)| m * self.win_rate_curve.eval(*c)).sum()
    }
}

#[derive(Clone, Debug)]
pub struct CtrSampler {
    values: Vec<f64>,
    index: WeightedAliasIndex<f64>,
}

impl CtrSampler {
    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        self.values[self.index.sample(rng)]
    }
}

/// Time-of-day request shape: a daily swing peaking in the afternoon with a
/// smaller half-day harmonic, evaluated at slot midpoints.
pub fn diurnal_weights(num_slots: usize) -> Vec<f64> {
    use std::f64::consts::PI;
    (0..num_slots)
        .map(|s| {
            let h = (s as f64 + 0.5) * 24.0 / num_slots as f64;
            1.0 + 0.5 * (2.0 * PI * (h - 10.0) / 24.0).sin() + 0.1 * (4.0 * PI * (h - 3.0) / 24.0).sin()
        })
        .collect()
}

/// Log-normal-shaped mass over 240 log-spaced predicted CTRs in
/// [1e-5, 0.1], median 5e-4.
pub fn default_ctr_histogram() -> Vec<(f64, f64)> {
    const N: usize = 240;
    let (lo, hi) = (1e-5f64.ln(), 0.1f64.ln());
    let (mu, sigma) = (5e-4f64.ln(), 1.3);
    let raw: Vec<(f64, f64)> = (0..N)
        .map(|i| {
            let x = lo + (hi - lo) * i as f64 / (N - 1) as f64;
            let z = (x - mu) / sigma;
            (x.exp(), (-0.5 * z * z).exp())
        })
        .collect();
    let total: f64 = raw.iter().map(|(_, m)| m).sum();
    raw.into_iter().map(|(c, m)| (c, m / total)).collect()
}

/// Assumed win rate rising with predicted CTR: better-predicted requests are
/// ones the campaign's given bid is more likely to win.
pub fn default_win_rate_curve() -> WinRateCurve {
    WinRateCurve {
        points: vec![(0.0, 0.06), (0.001, 0.13), (0.004, 0.32), (0.01, 0.55), (0.03, 0.8), (1.0, 0.88)],
    }
}

impl TrafficModel {
    /// The default day: diurnal volume, default CTR mix and win curve.
    pub fn default_day(total_requests: u64, num_slots: usize) -> Result<Self> {
        Self::new(diurnal_weights(num_slots), total_requests, default_ctr_histogram(), default_win_rate_curve())
    }
}
