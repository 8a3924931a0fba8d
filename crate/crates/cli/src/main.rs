use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use pacing::report::{format_table, mean_rows, run_scenario, SummaryRow};
use pacing::sim::{run_campaign, RngSpec, RunOptions};
use pacing::{PacingError, Scenario};

#[derive(Parser)]
#[command(name = "pacing", version, about = "Run budget pacing scenarios and write CSV series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario file.
    Run {
        scenario: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Also dump every delivery message of the first run to this file.
        #[arg(long)]
        event_log: Option<PathBuf>,
    },
    /// Run several scenario files and print one comparison table.
    Compare {
        #[arg(required = true)]
        scenarios: Vec<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Print a bundled preset scenario to stdout.
    Preset { name: String },
}

#[derive(Args)]
struct Common {
    /// First seed; replications use consecutive seeds from here.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replications: Option<u32>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Slot length in minutes; must divide a day.
    #[arg(long)]
    slot_minutes: Option<u32>,
}

fn load(path: &Path, common: &Common) -> Result<Scenario> {
    let scenario = Scenario::load(path)?;
    Ok(scenario.with_overrides(common.seed, common.replications, common.slot_minutes)?)
}

fn run_one(path: &Path, common: &Common) -> Result<Vec<SummaryRow>> {
    let scenario = load(path, common)?;
    let out = run_scenario(&scenario, &common.out_dir)
        .with_context(|| format!("running scenario {}", scenario.name))?;
    eprintln!("wrote {}", out.dir.display());
    Ok(out.rows)
}

fn dump_events(path: &Path, common: &Common, log: &Path) -> Result<()> {
    let scenario = load(path, common)?;
    let job = scenario.jobs()[0];
    let spec = scenario.campaign_spec(job.budget, job.seed)?;
    let model = scenario.realized_model(job.seed)?;
    let mut pacer = scenario.controllers[job.controller].build(&spec)?;
    let opts = RunOptions {
        ticks_per_slot: scenario.ticks_per_slot(),
        pipeline: scenario.pipeline.clone(),
        event_log: Some(log.to_path_buf()),
        ..RunOptions::default()
    };
    run_campaign(&spec, &model, pacer.as_mut(), RngSpec::new(job.seed), &opts)?;
    eprintln!("wrote {}", log.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { scenario, common, event_log } => run_one(scenario, common).and_then(|rows| {
            print!("{}", format_table(&mean_rows(&rows)));
            match event_log {
                Some(log) => dump_events(scenario, common, log),
                None => Ok(()),
            }
        }),
        Command::Compare { scenarios, common } => scenarios
            .iter()
            .map(|s| run_one(s, common))
            .collect::<Result<Vec<_>>>()
            .map(|all| print!("{}", format_table(&mean_rows(&all.concat())))),
        Command::Preset { name } => match pacing::presets::ALL.iter().find(|(n, _)| n == name) {
            Some((_, text)) => {
                print!("{text}");
                Ok(())
            }
            None => Err(anyhow::anyhow!(
                "unknown preset {name}; available: {}",
                pacing::presets::ALL.map(|(n, _)| n).join(", ")
            )),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            // invariant violations get their own code so scripts can tell them from bad input
            let invariant = err.chain().any(|e| matches!(e.downcast_ref::<PacingError>(), Some(PacingError::Invariant(_))));
            ExitCode::from(if invariant { 3 } else { 2 })
        }
    }
}
