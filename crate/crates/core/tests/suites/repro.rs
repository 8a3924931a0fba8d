//! Desk-scale reproductions of the headline comparisons, plus artifact
//! determinism. Each comparison runs over ten seeds and counts how many
//! seeds satisfy it.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use pacing::scenario::{ControllerSpec, Job};
use pacing::{presets, run_scenario, RunArtifacts, Scenario};

use super::Check;

pub const SEEDS: std::ops::RangeInclusive<u64> = 1..=10;

fn layered(layers: usize) -> ControllerSpec {
    ControllerSpec::Layered { layers, global_init_rate: 0.01, trial_budget_fraction: 0.01, scale_trial_layer: true }
}

/// `base` restricted to one budget and the given controllers over ten seeds.
fn sweep(base: &str, budget: f64, controllers: Vec<ControllerSpec>) -> Scenario {
    let mut s = Scenario::from_toml(base, "preset").expect("preset parses");
    s.budgets = vec![budget];
    s.controllers = controllers;
    s.seeds = Some(SEEDS.collect());
    s.validate().expect("sweep is valid");
    s
}

/// Artifacts keyed by (controller index, seed).
fn run(s: &Scenario) -> Result<BTreeMap<(usize, u64), RunArtifacts>, String> {
    let out = s.run_all().map_err(|e| e.to_string())?;
    Ok(out.into_iter().map(|(Job { controller, seed, .. }, a)| ((controller, seed), a)).collect())
}

fn tally(name: &str, passed: usize, need: usize, detail: String) -> Check {
    let total = SEEDS.count();
    ensure!(passed >= need, "{name}: {passed}/{total} seeds (need {need}); {detail}");
    Ok(format!("{name}: {passed}/{total} seeds (need {need}); {detail}"))
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

/// Layered L=8 against the single global rate on the 96-slot day.
pub fn performance_lift() -> Check {
    let start = Instant::now();
    let s = sweep(presets::FIG8_NO_GOAL, 2000.0, vec![layered(8), ControllerSpec::Global { global_init_rate: 0.01 }]);
    let runs = run(&s)?;
    let mut passed = 0;
    for seed in SEEDS {
        let (smart, base) = (&runs[&(0, seed)], &runs[&(1, seed)]);
        let (Some(e8), Some(e1)) = (smart.ecpc(), base.ecpc()) else { continue };
        if e8 <= 0.7 * e1 && smart.utilization() >= 0.99 && base.utilization() >= 0.99 {
            passed += 1;
        }
    }
    let lift = mean(SEEDS.map(|s| runs[&(0, s)].ecpc().unwrap_or(f64::NAN) / runs[&(1, s)].ecpc().unwrap_or(f64::NAN) - 1.0));
    let elapsed = start.elapsed();
    ensure!(elapsed.as_secs_f64() < 300.0, "performance lift took {elapsed:?}");
    tally(
        "eCPC(L=8) <= 0.7 eCPC(L=1), both utilization >= 0.99",
        passed,
        9,
        format!(
            "mean eCPC change {:+.0}%, mean utilization {:.3}/{:.3} ({:.1}s)",
            lift * 100.0,
            mean(SEEDS.map(|s| runs[&(0, s)].utilization())),
            mean(SEEDS.map(|s| runs[&(1, s)].utilization())),
            elapsed.as_secs_f64()
        ),
    )
}

/// One-minute slots against the per-minute +-10% comparator.
pub fn smoothness_ordering() -> Check {
    let mut s = Scenario::from_toml(presets::COMPARATOR, "preset").expect("preset parses");
    s.seeds = Some(SEEDS.collect());
    let smart_idx = s.controllers.iter().position(|c| matches!(c, ControllerSpec::Layered { .. })).ok_or("no layered")?;
    let cmp_idx = s.controllers.iter().position(|c| matches!(c, ControllerSpec::Comparator { .. })).ok_or("no comparator")?;
    let budget = s.budgets[0];
    let runs = run(&s)?;
    let mut passed = 0;
    for seed in SEEDS {
        let (smart, cmp) = (&runs[&(smart_idx, seed)], &runs[&(cmp_idx, seed)]);
        let tracks = |a: &RunArtifacts| (a.totals.spend.to_units() - budget).abs() <= 0.05 * budget;
        if cmp.avg_err >= 2.0 * smart.avg_err && tracks(smart) && tracks(cmp) {
            passed += 1;
        }
    }
    tally(
        "AvgErr(comparator) >= 2 AvgErr(layered), both end within 5% of budget",
        passed,
        9,
        format!(
            "mean AvgErr {:.3} vs {:.3}",
            mean(SEEDS.map(|s| runs[&(cmp_idx, s)].avg_err)),
            mean(SEEDS.map(|s| runs[&(smart_idx, s)].avg_err))
        ),
    )
}

/// eCPC goal of $0.8: enough layers meet it, one or two layers starve.
pub fn goal_compliance() -> Check {
    let s = sweep(presets::FIG9_GOAL, 2000.0, vec![layered(1), layered(2), layered(4), layered(8)]);
    let goal = s.campaign.ecpc_goal.ok_or("preset has no goal")?;
    let runs = run(&s)?;
    let mut passed = 0;
    for seed in SEEDS {
        let meets = |i: usize| runs[&(i, seed)].ecpc().is_some_and(|e| e <= goal * 1.05);
        let starves = |i: usize| runs[&(i, seed)].utilization() < 0.25;
        if meets(2) && meets(3) && starves(0) && starves(1) {
            passed += 1;
        }
    }
    let ecpc = |i: usize| mean(SEEDS.filter_map(|s| runs[&(i, s)].ecpc()));
    let util = |i: usize| mean(SEEDS.map(|s| runs[&(i, s)].utilization()));
    tally(
        "eCPC <= 0.84 for L=4,8 and utilization < 0.25 for L=1,2",
        passed,
        8,
        format!(
            "mean eCPC L=4 {:.3}, L=8 {:.3}; mean utilization L=1 {:.3}, L=2 {:.3}",
            ecpc(2),
            ecpc(3),
            util(0),
            util(1)
        ),
    )
}

/// 256 layers against 8 on the plan-tracking penalty.
pub fn layer_count_degradation() -> Check {
    let s = sweep(presets::FIG8_NO_GOAL, 4000.0, vec![layered(8), layered(256)]);
    let runs = run(&s)?;
    let passed = SEEDS.filter(|&seed| runs[&(1, seed)].omega > runs[&(0, seed)].omega).count();
    tally(
        "omega(L=256) > omega(L=8)",
        passed,
        8,
        format!(
            "mean omega {:.2} vs {:.2}",
            mean(SEEDS.map(|s| runs[&(1, s)].omega)),
            mean(SEEDS.map(|s| runs[&(0, s)].omega))
        ),
    )
}

fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().display().to_string();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    out
}

/// Runs every preset (scaled down to 1M requests) twice and compares the
/// written files byte for byte.
pub fn determinism(dir: &Path) -> Check {
    let mut files = 0;
    for (name, text) in presets::ALL {
        let mut s = Scenario::from_toml(text, name).map_err(|e| e.to_string())?;
        s.traffic.total_requests = 1_000_000;
        s.seeds = Some(vec![3, 4]);
        let a = run_scenario(&s, &dir.join("first")).map_err(|e| e.to_string())?;
        let b = run_scenario(&s, &dir.join("second")).map_err(|e| e.to_string())?;
        ensure!(a.rows == b.rows, "{name}: summary rows differ between runs");
        let (ta, tb) = (read_tree(&a.dir), read_tree(&b.dir));
        ensure!(ta.len() == tb.len() && ta.keys().eq(tb.keys()), "{name}: the runs wrote different file sets");
        for (path, bytes) in &ta {
            ensure!(tb[path] == *bytes, "{name}: {path} differs between runs");
        }
        files += ta.len();

        // a different seed must actually change something
        let mut other = s.clone();
        other.seeds = Some(vec![5, 6]);
        let c = run_scenario(&other, &dir.join("third")).map_err(|e| e.to_string())?;
        let spends = |rows: &[pacing::SummaryRow]| rows.iter().map(|r| r.spend).collect::<Vec<_>>();
        ensure!(spends(&c.rows) != spends(&a.rows), "{name}: changing the seed changed no spend");
    }
    Ok(format!("{files} CSV files byte-identical across reruns of {} presets", presets::ALL.len()))
}
