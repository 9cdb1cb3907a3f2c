use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use resonance_lab::config::{resolve_task, ExperimentConfig};
use resonance_lab::error::Result;
use resonance_lab::output::print;
use resonance_lab::pool::worker_count;
use resonance_lab::runner::{self, parse_values, SweepAxis};
use resonance_lab::{inspect, Checkpoint};

/// Policy Resonance experiments on the FME diagnostic task.
///
/// Runs execute in parallel up to PRLAB_WORKERS workers. Exit status is 0
/// on success, 1 on runtime failure and 2 on invalid input.
#[derive(Parser)]
#[command(name = "prlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed of a config and write metrics, checkpoints and a summary.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Repeat a config over values of one axis and write a sweep summary.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// n_agents, eta_max or algorithm.
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long)]
        values: String,
    },
    /// Test reward of a checkpoint with resonance bypassed, as CSV.
    Evaluate {
        #[arg(long)]
        ckpt: PathBuf,
        /// Task tag such as 1A4B2C, or a level file.
        #[arg(long)]
        task: String,
        #[arg(long)]
        agents: usize,
        #[arg(long, default_value_t = 192)]
        episodes: usize,
        #[arg(long, default_value_t = 10)]
        actions: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Play argmax actions instead of sampling the policy.
        #[arg(long)]
        greedy: bool,
    },
    /// Per-agent responsibility diagnostics on every Lv-C level, as CSV.
    Diagnose {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        task: String,
        #[arg(long)]
        agents: usize,
        #[arg(long, default_value_t = 10)]
        actions: usize,
        /// Exploration rate used to read q-table checkpoints as policies.
        #[arg(long, default_value_t = 0.0)]
        epsilon: f64,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config } => {
            let s = runner::run_file(&config, worker_count())?;
            eprintln!("{}: total {:.4} ± {:.4} over {} seeds", s.experiment_id, s.total.0, s.total.1, s.n_seeds);
        }
        Command::Sweep { config, axis, values } => {
            let axis: SweepAxis = axis.parse()?;
            let values = parse_values(&values);
            let base = ExperimentConfig::load(&config)?;
            for (value, s) in runner::sweep(&base, axis, &values, worker_count())? {
                eprintln!("{}={value}: total {:.4} ± {:.4}", axis.name(), s.total.0, s.total.1);
            }
        }
        Command::Evaluate { ckpt, task, agents, episodes, actions, seed, greedy } => {
            let task = resolve_task(&task, agents, actions)?;
            let report = inspect::evaluate(&Checkpoint::load(&ckpt)?, &task, episodes, seed, greedy)?;
            print(&inspect::evaluation_csv(&task, &report)?);
        }
        Command::Diagnose { ckpt, task, agents, actions, epsilon, out } => {
            let task = resolve_task(&task, agents, actions)?;
            let rows = inspect::diagnose(&Checkpoint::load(&ckpt)?, &task, epsilon)?;
            let csv = inspect::diagnostics_csv(&rows)?;
            match out {
                Some(path) => std::fs::write(&path, csv).map_err(resonance_lab::LabError::io(&path))?,
                None => print(&csv),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("prlab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
