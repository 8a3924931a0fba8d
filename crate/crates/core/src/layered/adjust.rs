//! Per-layer pacing rate adjustment.
//!
//! Slices are indexed by layer with index 0 the lowest priority and the last
//! index the highest. `spend` is the previous slot's spend per layer in
//! currency units and `prev` the rates that produced it.

/// Relative tolerance below which a residual counts as offset.
const RESIDUAL_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AdjustOptions {
    /// Whether the speedup pass rescales the current trial layer like any
    /// other active layer.
    pub scale_trial_layer: bool,
}

impl Default for AdjustOptions {
    fn default() -> Self {
        Self { scale_trial_layer: true }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Adjustment {
    pub rates: Vec<f64>,
    pub trial_layer: Option<usize>,
}

/// `ceil(1 / r_G)`.
pub fn default_num_layers(global_rate: f64) -> Option<usize> {
    (global_rate > 0.0 && global_rate <= 1.0).then(|| (1.0 / global_rate).ceil() as usize)
}

/// Probe rate that spends `lambda` of the next slot's budget in a layer
/// given the spend it produced at `historical_rate`. Falls back to
/// `fallback` when there is no spend history.
pub fn trial_rate(historical_spend: f64, historical_rate: f64, next_budget: f64, lambda: f64, fallback: f64) -> f64 {
    if historical_spend <= 0.0 || historical_rate <= 0.0 {
        return fallback.clamp(0.0, 1.0);
    }
    (historical_rate * lambda * next_budget.max(0.0) / historical_spend).min(1.0)
}

fn tolerance(residual: f64, spend: &[f64]) -> f64 {
    RESIDUAL_TOLERANCE * (residual.abs() + spend.iter().sum::<f64>()).max(1.0)
}

/// Rate adjustment for campaigns that only pace spend.
///
/// A positive residual raises rates top-down from the highest layer to the
/// lowest active one; a negative residual lowers them bottom-up until the
/// residual is offset. Layers without spend cannot be extrapolated and are
/// skipped. The layer just below the last one touched gets its trial rate.
pub fn adjust_without_goal(
    spend: &[f64],
    prev: &[f64],
    residual: f64,
    trial_rates: &[f64],
    trial_layer: Option<usize>,
    opts: AdjustOptions,
) -> Adjustment {
    let n = prev.len();
    debug_assert_eq!(spend.len(), n);
    debug_assert_eq!(trial_rates.len(), n);
    let mut rates = prev.to_vec();
    let tol = tolerance(residual, spend);
    if n == 0 || residual.abs() <= tol {
        return Adjustment { rates, trial_layer };
    }

    let Some(lowest) = prev.iter().position(|r| *r > 0.0) else {
        if residual > 0.0 {
            rates[n - 1] = trial_rates[n - 1];
            return Adjustment { rates, trial_layer: Some(n - 1) };
        }
        return Adjustment { rates, trial_layer };
    };

    let mut remaining = residual;
    let mut new_trial = trial_layer;
    if residual > 0.0 {
        let mut adjusted_any = false;
        let mut skipped = Vec::new();
        for l in (lowest..n).rev() {
            if !opts.scale_trial_layer && trial_layer == Some(l) {
                continue;
            }
            if spend[l] <= 0.0 {
                skipped.push(l);
                continue;
            }
            adjusted_any = true;
            let next = (prev[l] * (spend[l] + remaining) / spend[l]).min(1.0);
            remaining -= spend[l] * (next - prev[l]) / prev[l];
            rates[l] = next;
        }
        if !adjusted_any {
            // nothing to extrapolate from: probe the silent layers instead
            for l in skipped {
                rates[l] = rates[l].max(trial_rates[l]);
            }
        }
        if lowest != 0 && rates[lowest] > trial_rates[lowest - 1] {
            rates[lowest - 1] = trial_rates[lowest - 1];
            new_trial = Some(lowest - 1);
        }
    } else {
        for l in lowest..n {
            if spend[l] <= 0.0 {
                continue;
            }
            let next = (prev[l] * (spend[l] + remaining) / spend[l]).max(0.0);
            remaining -= spend[l] * (next - prev[l]) / prev[l];
            rates[l] = next;
            if remaining >= -tol {
                if l != 0 && next > trial_rates[l - 1] {
                    rates[l - 1] = trial_rates[l - 1];
                    new_trial = Some(l - 1);
                }
                break;
            }
        }
    }
    if new_trial.is_some_and(|t| rates[t] == 0.0) {
        new_trial = None;
    }
    Adjustment { rates, trial_layer: new_trial }
}

/// Expected joint cost per response of layers `from..` if rates move from
/// `prev` to `next`, extrapolating each layer's spend linearly in its rate.
///
/// Layers with a zero previous rate have no extrapolation basis and are left
/// out of both sums. Returns `f64::INFINITY` when nothing is expected to be
/// spent.
pub fn exp_perf(spend: &[f64], prev: &[f64], next: &[f64], ecpc: &[f64], from: usize) -> f64 {
    let mut cost = 0.0;
    let mut responses = 0.0;
    for j in from..prev.len() {
        if prev[j] <= 0.0 {
            continue;
        }
        let projected = spend[j] * next[j] / prev[j];
        cost += projected;
        responses += projected / ecpc[j];
    }
    if responses <= 0.0 {
        f64::INFINITY
    } else {
        cost / responses
    }
}

/// Rate adjustment for campaigns with a cost-per-response goal.
///
/// Applies [`adjust_without_goal`], then, if the projected joint eCPC misses
/// `goal`, drops layers bottom-up and scales the first layer that can stay so
/// the projection lands on the goal.
///
/// The marginal layer's rate solves the projection for equality using the
/// post-adjustment rates of the layers above it; when those are unchanged
/// this is the classic `r_l * sum(c_i (goal/e_i - 1)) / (c_l (1 - goal/e_l))`.
#[allow(clippy::too_many_arguments)]
pub fn adjust_with_goal(
    spend: &[f64],
    prev: &[f64],
    residual: f64,
    ecpc: &[f64],
    goal: f64,
    trial_rates: &[f64],
    trial_layer: Option<usize>,
    opts: AdjustOptions,
) -> Adjustment {
    let mut adj = adjust_without_goal(spend, prev, residual, trial_rates, trial_layer, opts);
    apply_goal(spend, prev, ecpc, goal, trial_rates, &mut adj);
    adj
}

/// The goal-enforcement pass on its own, applied to rates already chosen
/// for the next slot.
pub fn apply_goal(spend: &[f64], prev: &[f64], ecpc: &[f64], goal: f64, trial_rates: &[f64], adj: &mut Adjustment) {
    let n = prev.len();
    if exp_perf(spend, prev, &adj.rates, ecpc, 0) <= goal {
        return;
    }
    for l in 0..n {
        if exp_perf(spend, prev, &adj.rates, ecpc, l + 1) > goal {
            adj.rates[l] = 0.0;
            continue;
        }
        let denom = spend[l] * (1.0 - goal / ecpc[l]);
        if prev[l] > 0.0 && denom > 0.0 {
            let numer: f64 = (l + 1..n)
                .filter(|&i| prev[i] > 0.0)
                .map(|i| spend[i] * (adj.rates[i] / prev[i]) * (goal / ecpc[i] - 1.0))
                .sum();
            adj.rates[l] = (prev[l] * numer / denom).clamp(0.0, adj.rates[l]);
        }
        if l != 0 {
            adj.rates[l - 1] = trial_rates[l - 1];
            adj.trial_layer = Some(l - 1);
        }
        break;
    }
    if adj.trial_layer.is_some_and(|t| adj.rates[t] == 0.0) {
        adj.trial_layer = None;
    }
}

/// When every rate is zero, gives the top layer its trial rate.
/// Returns whether a reset happened.
pub fn reset_if_dead(rates: &mut [f64], top_trial_rate: f64) -> bool {
    if rates.is_empty() || rates.iter().any(|r| *r != 0.0) {
        return false;
    }
    let top = rates.len() - 1;
    rates[top] = top_trial_rate;
    true
}

/// Restores the priority ordering: the trial layer is capped by the layer
/// above it, then any other layer below its lower neighbour is raised.
pub fn enforce_monotone(rates: &mut [f64], trial_layer: Option<usize>) {
    if let Some(t) = trial_layer {
        if t + 1 < rates.len() {
            rates[t] = rates[t].min(rates[t + 1]);
        }
    }
    for l in 1..rates.len() {
        if rates[l] < rates[l - 1] {
            rates[l] = rates[l - 1];
        }
    }
}

/// Rates for the first post-initialization slot: layers open at 1.0 from
/// the top until their extrapolated full-rate spend covers `target`, the
/// marginal layer gets the fraction that hits it exactly, and the layer
/// below the last open one gets its trial rate.
pub fn assign_initial_rates(full_rate_spend: &[f64], target: f64, trial_rates: &[f64]) -> Adjustment {
    let n = full_rate_spend.len();
    let mut rates = vec![0.0; n];
    let tol = tolerance(target, full_rate_spend);
    let mut remaining = target.max(0.0);
    for l in (0..n).rev() {
        if remaining <= tol {
            break;
        }
        let full = full_rate_spend[l];
        if full <= remaining + tol {
            rates[l] = 1.0;
            remaining -= full;
        } else {
            rates[l] = remaining / full;
            remaining = 0.0;
        }
    }
    let mut trial_layer = None;
    match rates.iter().position(|r| *r > 0.0) {
        None if n > 0 => {
            rates[n - 1] = trial_rates[n - 1];
            trial_layer = Some(n - 1);
        }
        Some(l) if l > 0 && rates[l] > trial_rates[l - 1] => {
            rates[l - 1] = trial_rates[l - 1];
            trial_layer = Some(l - 1);
        }
        _ => {}
    }
    Adjustment { rates, trial_layer }
}

pub fn is_monotone(rates: &[f64]) -> bool {
    rates.windows(2).all(|w| w[0] <= w[1])
}
