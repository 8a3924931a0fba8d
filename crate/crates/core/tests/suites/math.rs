//! Replan, penalty, AvgErr and ExpPerf against independent oracles.

use std::time::Instant;

use pacing::layered::exp_perf;
use pacing::{avg_err, penalty, replan, CampaignId, CampaignSpec, Money, SpendingRecord};
use rand::Rng;

use super::Check;
use crate::common::*;

pub const INSTANCES: usize = 1000;

fn random_plan(r: &mut impl Rng, k: usize) -> Vec<Money> {
    let mut plan: Vec<Money> = (0..k)
        .map(|_| if r.random_bool(0.1) { Money::ZERO } else { Money::from_micros(r.random_range(1..1_000_000_000)) })
        .collect();
    if plan.iter().all(|b| *b == Money::ZERO) {
        plan[0] = Money::from_micros(1);
    }
    plan
}

pub fn replan_matches_qp() -> Check {
    let mut r = rng(11);
    let mut dominance_trials = 0;
    for case in 0..INSTANCES {
        let k = r.random_range(1..=12);
        let plan = random_plan(&mut r, k);
        let spec = CampaignSpec::new(CampaignId(1), Money::from_units(5.0), None, plan.clone()).unwrap();
        let m = r.random_range(0..k);
        let rest: Vec<f64> = plan[m..].iter().map(|b| b.to_units()).collect();
        let rest_sum: f64 = rest.iter().sum();
        // overspent, on-plan and surplus cases
        let remaining = match case % 3 {
            0 => Money::from_micros(r.random_range(0..=(rest_sum * 1e6) as i64 + 1)),
            1 => plan[m..].iter().sum(),
            _ => Money::from_micros(r.random_range(0..=(3.0 * rest_sum * 1e6) as i64 + 1)),
        };
        let got = replan(&spec, m, remaining).map_err(|e| e.to_string())?;
        let want = constrained_qp(&rest, remaining.to_units());
        ensure!(got.len() == want.len(), "case {case}: {} targets, oracle has {}", got.len(), want.len());
        for (t, (g, w)) in got.iter().zip(&want).enumerate() {
            ensure!(rel_close(*g, *w, 1e-9), "case {case} slot {t}: replan {g} vs oracle {w}");
        }
        let sum: f64 = got.iter().sum();
        ensure!(rel_close(sum, remaining.to_units(), 1e-9), "case {case}: targets sum {sum}, remaining {remaining}");

        if case % 10 == 0 {
            // no feasible reallocation deviates less from the plan
            let best = sq_dev(&got, &rest);
            for _ in 0..100 {
                let w: Vec<f64> = (0..rest.len()).map(|_| r.random_range(0.0..1.0)).collect();
                let ws: f64 = w.iter().sum();
                let alt: Vec<f64> = w.iter().map(|x| x / ws * remaining.to_units()).collect();
                ensure!(sq_dev(&alt, &rest) >= best - 1e-9 * best.max(1.0), "case {case}: random allocation beats replan");
                dominance_trials += 1;
            }
        }
    }
    Ok(format!("{INSTANCES} replan instances within 1e-9 of the KKT solve, {dominance_trials} random allocations dominated"))
}

pub fn penalty_and_avg_err_match() -> Check {
    let mut r = rng(12);
    for case in 0..INSTANCES {
        let k = r.random_range(1..=96);
        let plan = random_plan(&mut r, k);
        let spec = CampaignSpec::new(CampaignId(1), Money::from_units(5.0), None, plan.clone()).unwrap();
        let actual: Vec<Money> = plan
            .iter()
            .map(|b| match r.random_range(0..4) {
                0 => *b,
                1 => Money::ZERO,
                _ => Money::from_micros(r.random_range(0..=2 * b.micros() + 1)),
            })
            .collect();
        let record = SpendingRecord::new(actual.clone()).unwrap();
        let omega = penalty(&record, &spec).map_err(|e| e.to_string())?;
        let a: Vec<i64> = actual.iter().map(|m| m.micros()).collect();
        let b: Vec<i64> = plan.iter().map(|m| m.micros()).collect();
        let want = rms_oracle(&a, &b);
        ensure!(rel_close(omega, want, 1e-12), "case {case}: penalty {omega} vs oracle {want}");
        ensure!((actual != plan) || omega == 0.0, "case {case}: identical record with nonzero penalty");

        let err = avg_err(omega, &spec).map_err(|e| e.to_string())?;
        let budget: i64 = b.iter().sum();
        let want_err = want * k as f64 * 1e6 / budget as f64;
        ensure!(rel_close(err, want_err, 1e-12), "case {case}: avg_err {err} vs oracle {want_err}");
    }
    Ok(format!("{INSTANCES} penalty and AvgErr instances within 1e-12"))
}

pub fn exp_perf_matches() -> Check {
    let mut r = rng(13);
    for case in 0..INSTANCES {
        let n = r.random_range(1..=8);
        let spend: Vec<f64> = (0..n).map(|_| r.random_range(0.0..100.0)).collect();
        let prev: Vec<f64> = (0..n).map(|_| if r.random_bool(0.2) { 0.0 } else { r.random_range(0.001..=1.0) }).collect();
        let next: Vec<f64> = (0..n).map(|_| if r.random_bool(0.2) { 0.0 } else { r.random_range(0.0..=1.0) }).collect();
        let ecpc: Vec<f64> = (0..n).map(|_| r.random_range(0.05..10.0)).collect();
        let from = r.random_range(0..=n);
        let got = exp_perf(&spend, &prev, &next, &ecpc, from);
        let want = exp_perf_oracle(&spend, &prev, &next, &ecpc, from);
        if want.is_infinite() {
            ensure!(got == f64::INFINITY, "case {case}: expected the infinite sentinel, got {got}");
        } else {
            ensure!(rel_close(got, want, 1e-12), "case {case}: exp_perf {got} vs oracle {want}");
        }
    }
    Ok(format!("{INSTANCES} ExpPerf instances within 1e-12"))
}

/// Everything above, timed against the ten second budget.
pub fn run() -> Check {
    let start = Instant::now();
    let parts = [replan_matches_qp()?, penalty_and_avg_err_match()?, exp_perf_matches()?];
    let elapsed = start.elapsed();
    ensure!(elapsed.as_secs_f64() < 10.0, "math oracles took {elapsed:?}");
    Ok(format!("{} ({:.2}s)", parts.join("; "), elapsed.as_secs_f64()))
}
