//! CSV artifacts: per-seed metrics and timing logs, per-seed finals and the
//! across-seed summary.
//!
//! Floats are written with Rust's shortest round-trip formatting, so files
//! are byte-identical whenever the underlying values are bit-identical.
//! Wall-clock time lives in `timing.csv` only, keeping `metrics.csv`
//! reproducible.

use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use resonance_core::env::{LevelKind, TaskSpec};
use resonance_core::policy::PolicyParams;
use resonance_core::trainers::{EvalReport, LogRow, QTable, TrainingObserver};

use crate::checkpoint::Checkpoint;
use crate::error::{LabError, Result};

pub const METRICS_FILE: &str = "metrics.csv";
pub const TIMING_FILE: &str = "timing.csv";
pub const FINALS_FILE: &str = "finals.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const SWEEP_SUMMARY_FILE: &str = "sweep_summary.csv";

pub(crate) fn fmt(v: f64) -> String {
    format!("{v}")
}

pub(crate) fn create(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(LabError::io(path))?;
    Ok(csv::Writer::from_writer(file))
}

fn level_columns(n_levels: usize, suffix: &str) -> impl Iterator<Item = String> + '_ {
    (0..n_levels).map(move |l| format!("level_{l}_reward{suffix}"))
}

pub fn metrics_header(n_levels: usize) -> Vec<String> {
    let mut h: Vec<String> = ["experiment_id", "seed", "episode", "stage", "eta", "epsilon", "mean_total_reward"]
        .map(String::from)
        .into();
    h.extend(level_columns(n_levels, ""));
    h.extend(
        ["train_reward", "entropy", "loss", "surrogate", "clip_fraction", "body_grad_norm", "td_loss"].map(String::from),
    );
    h
}

pub fn metrics_record(id: &str, seed: u64, row: &LogRow) -> Vec<String> {
    let mut r = vec![
        id.to_string(),
        seed.to_string(),
        row.episode.to_string(),
        row.stage.to_string(),
        fmt(row.eta),
        fmt(row.epsilon),
        fmt(row.eval.total),
    ];
    r.extend(row.eval.per_level.iter().map(|&v| fmt(v)));
    r.extend(
        [row.train_reward, row.entropy, row.loss, row.surrogate, row.clip_fraction, row.body_grad_norm, row.td_loss]
            .map(fmt),
    );
    r
}

/// Streams log rows and checkpoints of one seed to disk as training runs, so
/// a failure part-way leaves every artifact written so far. Observer hooks
/// cannot fail, so the first I/O error is kept and reported by
/// [`SeedWriter::finish`].
pub struct SeedWriter {
    id: String,
    seed: u64,
    dir: std::path::PathBuf,
    metrics: csv::Writer<File>,
    timing: csv::Writer<File>,
    start: Instant,
    error: Option<LabError>,
}

impl SeedWriter {
    pub fn create(dir: &Path, id: &str, seed: u64, n_levels: usize) -> Result<Self> {
        std::fs::create_dir_all(dir.join("checkpoints")).map_err(LabError::io(dir))?;
        let mut metrics = create(&dir.join(METRICS_FILE))?;
        metrics.write_record(metrics_header(n_levels))?;
        metrics.flush().map_err(LabError::io(dir.join(METRICS_FILE)))?;
        let mut timing = create(&dir.join(TIMING_FILE))?;
        timing.write_record(["experiment_id", "seed", "episode", "wall_ms"])?;
        Ok(Self {
            id: id.to_string(),
            seed,
            dir: dir.to_path_buf(),
            metrics,
            timing,
            start: Instant::now(),
            error: None,
        })
    }

    fn record(&mut self, r: Result<()>) {
        if let Err(e) = r {
            self.error.get_or_insert(e);
        }
    }

    fn write_row(&mut self, row: &LogRow) -> Result<()> {
        self.metrics.write_record(metrics_record(&self.id, self.seed, row))?;
        self.metrics.flush().map_err(LabError::io(self.dir.join(METRICS_FILE)))?;
        let ms = self.start.elapsed().as_millis();
        self.timing
            .write_record([self.id.clone(), self.seed.to_string(), row.episode.to_string(), ms.to_string()])?;
        self.timing.flush().map_err(LabError::io(self.dir.join(TIMING_FILE)))?;
        Ok(())
    }

    pub fn checkpoint_path(&self, label: &str) -> std::path::PathBuf {
        self.dir.join("checkpoints").join(format!("{label}.ckpt"))
    }

    pub fn finish(mut self) -> Result<()> {
        self.metrics.flush().map_err(LabError::io(self.dir.join(METRICS_FILE)))?;
        self.timing.flush().map_err(LabError::io(self.dir.join(TIMING_FILE)))?;
        match self.error {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

impl TrainingObserver for SeedWriter {
    fn on_row(&mut self, row: &LogRow) {
        let r = self.write_row(row);
        self.record(r);
    }

    fn on_policy_checkpoint(&mut self, label: &str, params: &PolicyParams) {
        let r = Checkpoint::Policy(params.clone()).save(&self.checkpoint_path(label));
        self.record(r);
    }

    fn on_qtable_checkpoint(&mut self, label: &str, q: &QTable) {
        let r = Checkpoint::QTable(q.clone()).save(&self.checkpoint_path(label));
        self.record(r);
    }
}

/// Mean evaluation reward over the task's Lv-C levels.
pub fn lvc_mean(task: &TaskSpec, report: &EvalReport) -> Option<f64> {
    let idx: Vec<usize> = task.level_indices(LevelKind::C).collect();
    if idx.is_empty() {
        return None;
    }
    Some(idx.iter().map(|&l| report.per_level[l]).sum::<f64>() / idx.len() as f64)
}

/// Final evaluation of one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedFinal {
    pub seed: u64,
    pub report: EvalReport,
    pub lvc: Option<f64>,
}

/// Arithmetic mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Across-seed aggregate of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub experiment_id: String,
    pub algorithm: String,
    pub task: String,
    pub n_agents: usize,
    pub eta_max: f64,
    pub n_seeds: usize,
    pub total: (f64, f64),
    pub lvc: Option<(f64, f64)>,
    pub per_level: Vec<(f64, f64)>,
}

impl Summary {
    pub fn from_finals(
        experiment_id: &str,
        algorithm: &str,
        task: &TaskSpec,
        eta_max: f64,
        finals: &[SeedFinal],
    ) -> Summary {
        let totals: Vec<f64> = finals.iter().map(|f| f.report.total).collect();
        let lvc: Option<Vec<f64>> = finals.iter().map(|f| f.lvc).collect();
        let per_level = (0..task.n_levels())
            .map(|l| mean_std(&finals.iter().map(|f| f.report.per_level[l]).collect::<Vec<_>>()))
            .collect();
        Summary {
            experiment_id: experiment_id.to_string(),
            algorithm: algorithm.to_string(),
            task: task.tag.clone(),
            n_agents: task.n_agents,
            eta_max,
            n_seeds: finals.len(),
            total: mean_std(&totals),
            lvc: lvc.map(|v| mean_std(&v)),
            per_level,
        }
    }

    pub fn header(n_levels: usize) -> Vec<String> {
        let mut h: Vec<String> = [
            "experiment_id",
            "algorithm",
            "task",
            "n_agents",
            "eta_max",
            "n_seeds",
            "total_mean",
            "total_std",
            "lvc_mean",
            "lvc_std",
        ]
        .map(String::from)
        .into();
        for l in 0..n_levels {
            h.push(format!("level_{l}_reward_mean"));
            h.push(format!("level_{l}_reward_std"));
        }
        h
    }

    pub fn record(&self) -> Vec<String> {
        let mut r = vec![
            self.experiment_id.clone(),
            self.algorithm.clone(),
            self.task.clone(),
            self.n_agents.to_string(),
            fmt(self.eta_max),
            self.n_seeds.to_string(),
            fmt(self.total.0),
            fmt(self.total.1),
        ];
        match self.lvc {
            Some((m, s)) => r.extend([fmt(m), fmt(s)]),
            None => r.extend([String::new(), String::new()]),
        }
        for (m, s) in &self.per_level {
            r.push(fmt(*m));
            r.push(fmt(*s));
        }
        r
    }
}

pub fn write_finals(path: &Path, id: &str, finals: &[SeedFinal]) -> Result<()> {
    let mut w = create(path)?;
    let n_levels = finals.first().map_or(0, |f| f.report.per_level.len());
    let mut header: Vec<String> = ["experiment_id", "seed", "episodes", "total", "lvc"].map(String::from).into();
    header.extend(level_columns(n_levels, ""));
    w.write_record(header)?;
    for f in finals {
        let mut r = vec![
            id.to_string(),
            f.seed.to_string(),
            f.report.episodes.to_string(),
            fmt(f.report.total),
            f.lvc.map(fmt).unwrap_or_default(),
        ];
        r.extend(f.report.per_level.iter().map(|&v| fmt(v)));
        w.write_record(r)?;
    }
    w.flush().map_err(LabError::io(path))?;
    Ok(())
}

pub fn write_summary(path: &Path, summary: &Summary) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(Summary::header(summary.per_level.len()))?;
    w.write_record(summary.record())?;
    w.flush().map_err(LabError::io(path))?;
    Ok(())
}

/// One summary row per sweep value, prefixed with the axis and value.
pub fn write_sweep_summary(path: &Path, axis: &str, rows: &[(String, Summary)]) -> Result<()> {
    let mut w = create(path)?;
    let n_levels = rows.iter().map(|(_, s)| s.per_level.len()).max().unwrap_or(0);
    let mut header = vec!["axis".to_string(), "value".to_string()];
    header.extend(Summary::header(n_levels));
    w.write_record(header)?;
    for (value, s) in rows {
        let mut r = vec![axis.to_string(), value.clone()];
        r.extend(s.record());
        r.resize(n_levels * 2 + 12, String::new());
        w.write_record(r)?;
    }
    w.flush().map_err(LabError::io(path))?;
    Ok(())
}

/// Writes `text` to stdout, ignoring a closed pipe.
pub fn print(text: &str) {
    let _ = std::io::stdout().write_all(text.as_bytes());
}
