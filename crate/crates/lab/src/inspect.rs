//! `evaluate` and `diagnose` on a saved checkpoint.

use resonance_core::env::{LevelKind, TaskSpec};
use resonance_core::oracles::{
    dr_threshold_rhs, expected_lvc_reward, lvc_gradient, mean_log_marginal, p_plt, preference_metric, MarginalProfile,
};
use resonance_core::policy::ActionDistribution;
use resonance_core::rng;
use resonance_core::trainers::{evaluate_policy_with, evaluate_qtable, EvalReport, PolicyEvalMode, QTable};

use crate::checkpoint::Checkpoint;
use crate::error::{LabError, Result};
use crate::output::fmt;

/// Gradients closer to zero than this are reported with sign 0.
pub const SIGN_TOLERANCE: f64 = 1e-12;

fn check_dims(ckpt: &Checkpoint, task: &TaskSpec) -> Result<()> {
    let (l, n, k) = ckpt.dims();
    if (l, n, k) != (task.n_levels(), task.n_agents, task.n_actions) {
        return Err(LabError::Mismatch(format!(
            "checkpoint has {l} levels x {n} agents x {k} actions, task {} has {} x {} x {}",
            task.tag,
            task.n_levels(),
            task.n_agents,
            task.n_actions
        )));
    }
    Ok(())
}

/// Test reward with resonance bypassed. Policies sample from the raw
/// distribution unless `greedy` is set; q-tables always act greedily.
pub fn evaluate(ckpt: &Checkpoint, task: &TaskSpec, episodes: usize, seed: u64, greedy: bool) -> Result<EvalReport> {
    check_dims(ckpt, task)?;
    if episodes == 0 {
        return Err(LabError::Config("episodes must be >= 1".into()));
    }
    let mut r = rng::derive(seed, rng::purpose::EVAL);
    let mode = if greedy { PolicyEvalMode::Greedy } else { PolicyEvalMode::Sample };
    match ckpt {
        Checkpoint::Policy(p) => evaluate_policy_with(task, p, episodes, &mut r, mode),
        Checkpoint::QTable(q) => evaluate_qtable(task, q, episodes, &mut r),
    }
    .map_err(LabError::Training)
}

pub fn evaluation_csv(task: &TaskSpec, report: &EvalReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["level", "kind", "mean_reward"])?;
    for (l, v) in report.per_level.iter().enumerate() {
        w.write_record([l.to_string(), task.levels[l].kind.letter().to_string(), fmt(*v)])?;
    }
    w.write_record(["total".to_string(), String::new(), fmt(report.total)])?;
    Ok(String::from_utf8(w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?).expect("csv is utf-8"))
}

/// ε-greedy action distribution of one q-table row.
fn epsilon_greedy(q: &QTable, agent: usize, level: usize, epsilon: f64) -> ActionDistribution {
    let k = q.n_actions;
    let mut probs = vec![epsilon / k as f64; k];
    probs[q.greedy(agent, level)] += 1.0 - epsilon;
    ActionDistribution::new(probs).expect("valid ε-greedy distribution")
}

/// Per-agent action distributions on `level`.
pub fn level_distributions(ckpt: &Checkpoint, level: usize, epsilon: f64) -> Vec<ActionDistribution> {
    match ckpt {
        Checkpoint::Policy(p) => p.forward_all().level_distributions(level),
        Checkpoint::QTable(q) => (0..q.n_agents).map(|i| epsilon_greedy(q, i, level, epsilon)).collect(),
    }
}

/// One agent on one Lv-C level.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticRow {
    pub level: usize,
    pub target_action: usize,
    pub agent: usize,
    /// `π_iγ`, the probability of the capacity-limited action.
    pub pi_gamma: f64,
    pub preference: f64,
    pub lvc_gradient: f64,
    pub gradient_sign: i8,
    /// Level-wide values, repeated on every agent row.
    pub p_plt: f64,
    pub expected_lvc_reward: f64,
    pub dr_threshold: f64,
    /// Geometric mean of the other agents' `π_jγ`; `None` when one is zero.
    pub others_geometric_mean: Option<f64>,
}

impl DiagnosticRow {
    /// Whether the other agents' geometric mean exceeds the threshold, the
    /// necessary condition for this agent's gradient to turn negative.
    pub fn above_threshold(&self) -> Option<bool> {
        self.others_geometric_mean.map(|g| g > self.dr_threshold)
    }
}

/// Diffusion-of-responsibility diagnostics for every Lv-C level. Q-table
/// checkpoints are read as ε-greedy policies.
pub fn diagnose(ckpt: &Checkpoint, task: &TaskSpec, epsilon: f64) -> Result<Vec<DiagnosticRow>> {
    check_dims(ckpt, task)?;
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(LabError::Config(format!("epsilon must lie in [0, 1], got {epsilon}")));
    }
    let n = task.n_agents;
    let threshold = dr_threshold_rhs(n);
    let mut rows = Vec::new();
    for level in task.level_indices(LevelKind::C) {
        let target = task.levels[level].target_action;
        let dists = level_distributions(ckpt, level, epsilon);
        let profile = MarginalProfile::from_distributions(&dists, target).map_err(LabError::Training)?;
        let preference = preference_metric(&dists, target);
        let (plt, expected) = (p_plt(&profile), expected_lvc_reward(&profile));
        for agent in 0..n {
            let g = lvc_gradient(&profile, agent);
            rows.push(DiagnosticRow {
                level,
                target_action: target,
                agent,
                pi_gamma: profile.marginals()[agent],
                preference: preference[agent],
                lvc_gradient: g,
                gradient_sign: if g.abs() <= SIGN_TOLERANCE { 0 } else if g > 0.0 { 1 } else { -1 },
                p_plt: plt,
                expected_lvc_reward: expected,
                dr_threshold: threshold,
                others_geometric_mean: mean_log_marginal(&profile, agent).ok(),
            });
        }
    }
    Ok(rows)
}

pub fn diagnostics_csv(rows: &[DiagnosticRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "level",
        "target_action",
        "agent",
        "pi_gamma",
        "preference",
        "lvc_gradient",
        "gradient_sign",
        "p_plt",
        "expected_lvc_reward",
        "others_geometric_mean",
        "dr_threshold",
        "above_threshold",
    ])?;
    for r in rows {
        w.write_record([
            r.level.to_string(),
            r.target_action.to_string(),
            r.agent.to_string(),
            fmt(r.pi_gamma),
            fmt(r.preference),
            fmt(r.lvc_gradient),
            r.gradient_sign.to_string(),
            fmt(r.p_plt),
            fmt(r.expected_lvc_reward),
            r.others_geometric_mean.map(fmt).unwrap_or_default(),
            fmt(r.dr_threshold),
            r.above_threshold().map(|b| b.to_string()).unwrap_or_default(),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?).expect("csv is utf-8"))
}
