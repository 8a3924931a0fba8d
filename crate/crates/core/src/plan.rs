//! Campaign plans, spending records, and the shared pacing math: the
//! plan-deviation penalty, its normalized form, remaining-budget replanning,
//! and the slot residual.

use serde::{Deserialize, Serialize};

use crate::error::{PacingError, Result};
use crate::money::Money;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CampaignId(pub u32);

/// Budget, billing, optional eCPC goal, and the per-slot spending plan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignSpec {
    pub id: CampaignId,
    pub budget: Money,
    pub cpm: Money,
    pub ecpc_goal: Option<Money>,
    spending_plan: Vec<Money>,
}

impl CampaignSpec {
    pub fn new(
        id: CampaignId,
        cpm: Money,
        ecpc_goal: Option<Money>,
        spending_plan: Vec<Money>,
    ) -> Result<Self> {
        if spending_plan.is_empty() {
            return Err(PacingError::InvalidCampaign("spending plan has no slots".into()));
        }
        if let Some(slot) = spending_plan.iter().position(|b| b.is_negative()) {
            return Err(PacingError::InvalidCampaign(format!("planned spend of slot {slot} is negative")));
        }
        if cpm.micros() <= 0 {
            return Err(PacingError::InvalidCampaign("cpm must be positive".into()));
        }
        if matches!(ecpc_goal, Some(g) if g.micros() <= 0) {
            return Err(PacingError::InvalidCampaign("ecpc goal must be positive".into()));
        }
        let budget = spending_plan.iter().sum();
        Ok(Self { id, budget, cpm, ecpc_goal, spending_plan })
    }

    /// Even pacing: `budget` split over `num_slots` as evenly as the money
    /// quantum allows.
    pub fn even(id: CampaignId, budget: Money, cpm: Money, ecpc_goal: Option<Money>, num_slots: usize) -> Result<Self> {
        if num_slots == 0 {
            return Err(PacingError::InvalidCampaign("num_slots must be positive".into()));
        }
        Self::new(id, cpm, ecpc_goal, budget.split_proportional(&vec![1.0; num_slots]))
    }

    /// Plan proportional to `weights` (e.g. forecast traffic per slot).
    pub fn proportional(id: CampaignId, budget: Money, cpm: Money, ecpc_goal: Option<Money>, weights: &[f64]) -> Result<Self> {
        if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) || weights.iter().sum::<f64>() <= 0.0 {
            return Err(PacingError::InvalidCampaign("plan weights must be non-negative with positive sum".into()));
        }
        Self::new(id, cpm, ecpc_goal, budget.split_proportional(weights))
    }

    pub fn num_slots(&self) -> usize {
        self.spending_plan.len()
    }

    pub fn spending_plan(&self) -> &[Money] {
        &self.spending_plan
    }

    pub fn impression_cost(&self) -> Money {
        self.cpm.per_impression()
    }
}

/// Realized spend per slot.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpendingRecord {
    per_slot_spend: Vec<Money>,
}

impl SpendingRecord {
    pub fn new(per_slot_spend: Vec<Money>) -> Result<Self> {
        if per_slot_spend.iter().any(|c| c.is_negative()) {
            return Err(PacingError::InvalidCampaign("slot spend must be non-negative".into()));
        }
        Ok(Self { per_slot_spend })
    }

    pub fn push(&mut self, spend: Money) {
        debug_assert!(!spend.is_negative());
        self.per_slot_spend.push(spend);
    }

    pub fn per_slot_spend(&self) -> &[Money] {
        &self.per_slot_spend
    }

    pub fn total(&self) -> Money {
        self.per_slot_spend.iter().sum()
    }

    /// Pads unfinished slots with zero spend. Only meaningful when the
    /// campaign is known to have ended.
    pub fn padded_to(&self, num_slots: usize) -> SpendingRecord {
        let mut per_slot_spend = self.per_slot_spend.clone();
        per_slot_spend.resize(num_slots.max(per_slot_spend.len()), Money::ZERO);
        SpendingRecord { per_slot_spend }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerformanceRecord {
    pub cost: Money,
    pub responses: u64,
}

impl PerformanceRecord {
    /// Cost per response, in currency units; `None` without responses.
    pub fn performance(&self) -> Option<f64> {
        (self.responses > 0).then(|| self.cost.to_units() / self.responses as f64)
    }
}

/// Root-mean-square deviation of `actual` from the plan over all `K` slots.
pub fn penalty(actual: &SpendingRecord, plan: &CampaignSpec) -> Result<f64> {
    let k = plan.num_slots();
    if actual.per_slot_spend.len() != k {
        return Err(PacingError::LengthMismatch { expected: k, actual: actual.per_slot_spend.len() });
    }
    Ok(rms_deviation(&actual.per_slot_spend, &plan.spending_plan))
}

/// Penalty over the slots observed so far (K' = `actual` length).
pub fn penalty_so_far(actual: &SpendingRecord, plan: &CampaignSpec) -> Result<f64> {
    let seen = actual.per_slot_spend.len();
    if seen == 0 || seen > plan.num_slots() {
        return Err(PacingError::LengthMismatch { expected: plan.num_slots(), actual: seen });
    }
    Ok(rms_deviation(&actual.per_slot_spend, &plan.spending_plan[..seen]))
}

fn rms_deviation(actual: &[Money], plan: &[Money]) -> f64 {
    let sum_sq: f64 = actual
        .iter()
        .zip(plan)
        .map(|(c, b)| {
            let d = (*c - *b).to_units();
            d * d
        })
        .sum();
    (sum_sq / actual.len() as f64).sqrt()
}

/// Penalty normalized by the average planned spend per slot.
pub fn avg_err(omega: f64, spec: &CampaignSpec) -> Result<f64> {
    avg_err_over(omega, spec.budget, spec.num_slots())
}

/// `avg_err` for an arbitrary `(budget, slots)` pair, used for the cumulative
/// form where only the first K' slots and their planned budget count.
pub fn avg_err_over(omega: f64, budget: Money, num_slots: usize) -> Result<f64> {
    if budget.micros() <= 0 {
        return Err(PacingError::ZeroBudget);
    }
    if num_slots == 0 {
        return Err(PacingError::LengthMismatch { expected: 1, actual: 0 });
    }
    Ok(omega / (budget.to_units() / num_slots as f64))
}

/// Desired spend for each remaining slot `m+1..=K` given `remaining` budget,
/// in currency units.
///
/// Spreads the surplus (or deficit) against the remaining plan evenly over
/// the remaining slots, which minimizes the RMS deviation under the
/// sum constraint. Components may be negative when past overspend exceeds
/// what is left of the plan; callers clamp the slot they act on.
pub fn replan(spec: &CampaignSpec, slots_elapsed: usize, remaining: Money) -> Result<Vec<f64>> {
    let k = spec.num_slots();
    if slots_elapsed >= k {
        return Err(PacingError::SlotOutOfRange { elapsed: slots_elapsed, num_slots: k });
    }
    let rest = &spec.spending_plan[slots_elapsed..];
    let planned: Money = rest.iter().sum();
    let shift = (remaining - planned).to_units() / rest.len() as f64;
    Ok(rest.iter().map(|b| b.to_units() + shift).collect())
}

/// Desired spend this slot minus actual spend last slot.
pub fn residual(desired_this_slot: f64, actual_last_slot: f64) -> f64 {
    desired_this_slot - actual_last_slot
}
