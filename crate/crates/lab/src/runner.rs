//! `run` and `sweep`: seeds and sweep values fan out over the worker pool,
//! and summaries are written after every run has joined.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use resonance_core::env::TaskSpec;
use resonance_core::trainers::{run_two_stage, run_value_decomposition};

use crate::config::{Algorithm, ExperimentConfig};
use crate::error::{LabError, Result};
use crate::output::{self, SeedFinal, SeedWriter, Summary};
use crate::pool::map_parallel;

/// Directory of one seed below the experiment's output directory.
pub fn seed_dir(cfg: &ExperimentConfig, seed: u64) -> std::path::PathBuf {
    cfg.output_dir.join(format!("seed-{seed}"))
}

/// Trains one seed, streaming metrics and checkpoints to [`seed_dir`].
pub fn run_seed(cfg: &ExperimentConfig, task: &TaskSpec, seed: u64) -> Result<SeedFinal> {
    let dir = seed_dir(cfg, seed);
    let mut writer = SeedWriter::create(&dir, &cfg.id, seed, task.n_levels())?;
    let trained = if cfg.algorithm == Algorithm::VdEps {
        run_value_decomposition(
            task,
            &cfg.vd.to_core(),
            cfg.stage_plan().total_episodes(),
            cfg.plan.eval_points,
            cfg.plan.eval_episodes,
            seed,
            &mut writer,
        )
        .map(|o| o.final_eval)
    } else {
        run_two_stage(task, &cfg.trainer.to_core(), &cfg.stage_plan(), seed, &mut writer).map(|o| o.final_eval)
    };
    // artifacts are flushed before any training error is reported
    let io = writer.finish();
    let report = trained.map_err(LabError::Training)?;
    io?;
    let lvc = output::lvc_mean(task, &report);
    Ok(SeedFinal { seed, report, lvc })
}

fn summarize(cfg: &ExperimentConfig, task: &TaskSpec, finals: &[SeedFinal]) -> Result<Summary> {
    output::write_finals(&cfg.output_dir.join(output::FINALS_FILE), &cfg.id, finals)?;
    // η is reported as 0 for runs that never resonate
    let eta = if cfg.algorithm.uses_resonance() { cfg.pr.eta_max } else { 0.0 };
    let summary = Summary::from_finals(&cfg.id, cfg.algorithm.id(), task, eta, finals);
    output::write_summary(&cfg.output_dir.join(output::SUMMARY_FILE), &summary)?;
    Ok(summary)
}

/// Runs every configured seed for each experiment on up to `workers`
/// threads. The first failure in job order is returned once all jobs have
/// finished; successful seeds keep their artifacts either way.
fn run_all(experiments: &[(ExperimentConfig, TaskSpec)], workers: usize) -> Result<Vec<Vec<SeedFinal>>> {
    let jobs: Vec<(usize, u64)> = experiments
        .iter()
        .enumerate()
        .flat_map(|(e, (cfg, _))| cfg.seeds.iter().map(move |&s| (e, s)))
        .collect();
    for (cfg, _) in experiments {
        std::fs::create_dir_all(&cfg.output_dir).map_err(LabError::io(&cfg.output_dir))?;
    }
    let results = map_parallel(&jobs, workers, |&(e, seed)| {
        let (cfg, task) = &experiments[e];
        run_seed(cfg, task, seed)
    });
    let mut grouped: Vec<Vec<SeedFinal>> = vec![Vec::new(); experiments.len()];
    let mut first_error = None;
    for ((e, _), r) in jobs.iter().zip(results) {
        match r {
            Ok(f) => grouped[*e].push(f),
            Err(err) => {
                first_error.get_or_insert(err);
            }
        }
    }
    match first_error {
        Some(e) => Err(e),
        None => Ok(grouped),
    }
}

/// Full run of one experiment: every seed, then `finals.csv` and
/// `summary.csv` in the output directory.
pub fn run(cfg: &ExperimentConfig, workers: usize) -> Result<Summary> {
    cfg.validate()?;
    let task = cfg.task_spec()?;
    let finals = run_all(&[(cfg.clone(), task.clone())], workers)?.remove(0);
    summarize(cfg, &task, &finals)
}

pub fn run_file(path: &Path, workers: usize) -> Result<Summary> {
    run(&ExperimentConfig::load(path)?, workers)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    NAgents,
    EtaMax,
    Algorithm,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::NAgents => "n_agents",
            SweepAxis::EtaMax => "eta_max",
            SweepAxis::Algorithm => "algorithm",
        }
    }

    /// Copy of `base` with the axis set to `value`, writing below
    /// `<output_dir>/<axis>-<value>`.
    pub fn apply(self, base: &ExperimentConfig, value: &str) -> Result<ExperimentConfig> {
        let mut cfg = base.clone();
        let bad = |e: &dyn fmt::Display| LabError::Config(format!("{} value {value:?}: {e}", self.name()));
        match self {
            SweepAxis::NAgents => cfg.n_agents = value.parse().map_err(|e| bad(&e))?,
            SweepAxis::EtaMax => cfg.pr.eta_max = value.parse().map_err(|e| bad(&e))?,
            SweepAxis::Algorithm => {
                cfg.algorithm = value.parse()?;
                // the flags follow the algorithm being swept
                cfg.pr.enabled = None;
                cfg.pr.fast = None;
            }
        }
        cfg.id = format!("{}_{}-{value}", base.id, self.name());
        cfg.output_dir = base.output_dir.join(format!("{}-{value}", self.name()));
        cfg.validate()?;
        Ok(cfg)
    }
}

impl FromStr for SweepAxis {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "n_agents" => Ok(SweepAxis::NAgents),
            "eta_max" => Ok(SweepAxis::EtaMax),
            "algorithm" => Ok(SweepAxis::Algorithm),
            _ => Err(LabError::Config(format!("unknown sweep axis {s:?}; use n_agents, eta_max or algorithm"))),
        }
    }
}

/// Splits a comma-separated value list, dropping blanks.
pub fn parse_values(list: &str) -> Vec<String> {
    list.split(',').map(str::trim).filter(|v| !v.is_empty()).map(String::from).collect()
}

/// One run per value per seed, then a `sweep_summary.csv` in the base
/// output directory with one row per value.
pub fn sweep(base: &ExperimentConfig, axis: SweepAxis, values: &[String], workers: usize) -> Result<Vec<(String, Summary)>> {
    if values.is_empty() {
        return Err(LabError::Config("sweep needs at least one value".into()));
    }
    let mut seen = values.to_vec();
    seen.sort();
    if seen.windows(2).any(|w| w[0] == w[1]) {
        return Err(LabError::Config("sweep values contain duplicates".into()));
    }
    let experiments = values
        .iter()
        .map(|v| {
            let cfg = axis.apply(base, v)?;
            let task = cfg.task_spec()?;
            Ok((cfg, task))
        })
        .collect::<Result<Vec<_>>>()?;
    let finals = run_all(&experiments, workers)?;
    let mut rows = Vec::with_capacity(values.len());
    for ((value, (cfg, task)), f) in values.iter().zip(&experiments).zip(&finals) {
        rows.push((value.clone(), summarize(cfg, task, f)?));
    }
    std::fs::create_dir_all(&base.output_dir).map_err(LabError::io(&base.output_dir))?;
    output::write_sweep_summary(&base.output_dir.join(output::SWEEP_SUMMARY_FILE), axis.name(), &rows)?;
    Ok(rows)
}
