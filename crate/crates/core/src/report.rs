//! Summary rows and CSV artifacts.
//!
//! Every CSV starts with a `# pacing-<kind> v1` comment line. Floats are
//! written with fixed precision so reruns are byte-identical.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::scenario::{Job, Scenario};
use crate::sim::RunArtifacts;

pub const SERIES_HEADER: &str = "# pacing-series v1";
pub const SUMMARY_HEADER: &str = "# pacing-summary v1";

/// Participations per request the campaign was eligible for.
pub fn compute_avg_pr(participations: u64, eligible: u64) -> Option<f64> {
    (eligible > 0).then(|| participations as f64 / eligible as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub controller: String,
    pub budget: f64,
    pub seed: u64,
    pub spend: f64,
    pub omega: f64,
    pub avg_err: f64,
    pub ecpc: Option<f64>,
    pub avg_pr: Option<f64>,
    pub clicks: u64,
    pub impressions: u64,
}

impl SummaryRow {
    pub fn new(scenario: &str, job: &Job, a: &RunArtifacts) -> Self {
        Self {
            scenario: scenario.into(),
            controller: a.label.clone(),
            budget: job.budget,
            seed: job.seed,
            spend: a.totals.spend.to_units(),
            omega: a.omega,
            avg_err: a.avg_err,
            ecpc: a.ecpc(),
            avg_pr: compute_avg_pr(a.participations, a.eligible),
            clicks: a.totals.clicks,
            impressions: a.totals.impressions,
        }
    }

    pub fn utilization(&self) -> f64 {
        self.spend / self.budget
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::new();
    writeln!(out, "{SUMMARY_HEADER}").unwrap();
    writeln!(out, "scenario,controller,budget,seed,spend,omega,avg_err,ecpc,avg_pr,impressions,clicks").unwrap();
    for r in rows {
        writeln!(
            out,
            "{},{},{:.2},{},{:.6},{:.6},{:.6},{},{},{},{}",
            r.scenario,
            r.controller,
            r.budget,
            r.seed,
            r.spend,
            r.omega,
            r.avg_err,
            opt(r.ecpc),
            opt(r.avg_pr),
            r.impressions,
            r.clicks
        )
        .unwrap();
    }
    out
}

/// Per-slot series; `rates` lists the layer rates lowest first, separated
/// by `;`.
pub fn series_csv(a: &RunArtifacts) -> String {
    let mut out = String::new();
    writeln!(out, "{SERIES_HEADER}").unwrap();
    writeln!(out, "slot,planned,spent,impressions,clicks,ecpc,requests,participations,rates").unwrap();
    for r in &a.rows {
        let rates: Vec<String> = r.rates.iter().map(|x| format!("{x:.6}")).collect();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.slot,
            r.planned,
            r.spent,
            r.impressions,
            r.clicks,
            opt(r.ecpc()),
            r.requests,
            r.participations,
            rates.join(";")
        )
        .unwrap();
    }
    out
}

pub fn series_file_name(job: &Job, a: &RunArtifacts) -> String {
    format!("c{}_{}_b{}_s{}.csv", job.controller, a.label, job.budget, job.seed)
}

/// Mean of each metric per (controller, budget), in first-seen order.
pub fn mean_rows(rows: &[SummaryRow]) -> Vec<SummaryRow> {
    let mut groups: Vec<(String, f64, Vec<&SummaryRow>)> = Vec::new();
    for r in rows {
        match groups.iter_mut().find(|(c, b, _)| *c == r.controller && *b == r.budget) {
            Some(g) => g.2.push(r),
            None => groups.push((r.controller.clone(), r.budget, vec![r])),
        }
    }
    groups
        .into_iter()
        .map(|(controller, budget, rs)| {
            let n = rs.len() as f64;
            let mean = |f: &dyn Fn(&SummaryRow) -> f64| rs.iter().map(|r| f(r)).sum::<f64>() / n;
            let mean_opt = |f: &dyn Fn(&SummaryRow) -> Option<f64>| {
                let v: Vec<f64> = rs.iter().filter_map(|r| f(r)).collect();
                (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
            };
            SummaryRow {
                scenario: rs[0].scenario.clone(),
                controller,
                budget,
                seed: 0,
                spend: mean(&|r| r.spend),
                omega: mean(&|r| r.omega),
                avg_err: mean(&|r| r.avg_err),
                ecpc: mean_opt(&|r| r.ecpc),
                avg_pr: mean_opt(&|r| r.avg_pr),
                clicks: (mean(&|r| r.clicks as f64)).round() as u64,
                impressions: (mean(&|r| r.impressions as f64)).round() as u64,
            }
        })
        .collect()
}

/// Human-readable table of per-group means.
pub fn format_table(rows: &[SummaryRow]) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "{:<20} {:<14} {:>9} {:>10} {:>9} {:>8} {:>8} {:>7}",
        "scenario", "controller", "budget", "spend", "omega", "avg_err", "ecpc", "avg_pr"
    )
    .unwrap();
    for r in rows {
        writeln!(
            out,
            "{:<20} {:<14} {:>9.2} {:>10.2} {:>9.3} {:>8.3} {:>8} {:>7}",
            r.scenario,
            r.controller,
            r.budget,
            r.spend,
            r.omega,
            r.avg_err,
            r.ecpc.map(|e| format!("{e:.3}")).unwrap_or_else(|| "-".into()),
            r.avg_pr.map(|p| format!("{p:.4}")).unwrap_or_else(|| "-".into()),
        )
        .unwrap();
    }
    out
}

pub struct ScenarioOutput {
    pub rows: Vec<SummaryRow>,
    pub dir: PathBuf,
}

/// Runs a scenario and writes `summary.csv` plus one series file per run
/// under `out_dir/<name>/`.
pub fn run_scenario(scenario: &Scenario, out_dir: &Path) -> Result<ScenarioOutput> {
    let results = scenario.run_all()?;
    let dir = out_dir.join(&scenario.name);
    fs::create_dir_all(dir.join("series"))?;
    let mut rows = Vec::with_capacity(results.len());
    for (job, a) in &results {
        fs::write(dir.join("series").join(series_file_name(job, a)), series_csv(a))?;
        rows.push(SummaryRow::new(&scenario.name, job, a));
    }
    fs::write(dir.join("summary.csv"), summary_csv(&rows))?;
    Ok(ScenarioOutput { rows, dir })
}
