use alloc::vec;
use alloc::vec::Vec;

use crate::env::{EnvState, JointAction, TaskSpec};
use crate::error::{Error, Result};
use crate::policy::{argmax_of, sample_index, PolicyParams};
use crate::rng::LabRng;
use crate::trainers::vd::QTable;

/// Mean reward per level and their sum over a number of test episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub per_level: Vec<f64>,
    pub total: f64,
    pub episodes: usize,
}

/// Plays `n_episodes` with `act(level, agent, rng)` choosing each action.
/// Bandit arms come from a child stream seeded off `rng`.
pub fn evaluate(
    task: &TaskSpec,
    n_episodes: usize,
    rng: &mut LabRng,
    mut act: impl FnMut(usize, usize, &mut LabRng) -> usize,
) -> Result<EvalReport> {
    if n_episodes == 0 {
        return Err(Error::EmptyBatch);
    }
    let (l, n) = (task.n_levels(), task.n_agents);
    let mut sums = vec![0.0; l];
    let arm_seed: u64 = rand::Rng::gen(rng);
    let mut env = EnvState::with_rng(task, <LabRng as rand::SeedableRng>::seed_from_u64(arm_seed));
    let mut actions = vec![0usize; n];
    for _ in 0..n_episodes {
        env.restart();
        while !env.is_done() {
            let level = env.level_index();
            for (agent, slot) in actions.iter_mut().enumerate() {
                *slot = act(level, agent, rng);
            }
            let out = env.step(&JointAction::from_vec_unchecked(actions.clone()))?;
            sums[out.level_index] += out.reward;
        }
    }
    let per_level: Vec<f64> = sums.iter().map(|s| s / n_episodes as f64).collect();
    let total = per_level.iter().sum();
    Ok(EvalReport {
        per_level,
        total,
        episodes: n_episodes,
    })
}

/// How a policy picks actions at test time.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum PolicyEvalMode {
    /// Sample from the raw policy.
    #[default]
    Sample,
    /// Play each agent's argmax action.
    Greedy,
}

/// Samples from the raw policy; resonance never applies at evaluation.
pub fn evaluate_policy(task: &TaskSpec, params: &PolicyParams, n_episodes: usize, rng: &mut LabRng) -> Result<EvalReport> {
    evaluate_policy_with(task, params, n_episodes, rng, PolicyEvalMode::Sample)
}

pub fn evaluate_policy_with(
    task: &TaskSpec,
    params: &PolicyParams,
    n_episodes: usize,
    rng: &mut LabRng,
    mode: PolicyEvalMode,
) -> Result<EvalReport> {
    check_policy(task, params)?;
    let table = params.forward_all();
    match mode {
        PolicyEvalMode::Sample => evaluate(task, n_episodes, rng, |level, agent, r| {
            sample_index(table.probs(level, agent), rand::Rng::gen(r))
        }),
        PolicyEvalMode::Greedy => evaluate(task, n_episodes, rng, |level, agent, _| {
            argmax_of(table.probs(level, agent))
        }),
    }
}

/// Greedy joint actions from the online values.
pub fn evaluate_qtable(task: &TaskSpec, q: &QTable, n_episodes: usize, rng: &mut LabRng) -> Result<EvalReport> {
    if q.n_agents != task.n_agents || q.n_levels != task.n_levels() || q.n_actions != task.n_actions {
        return Err(Error::DimensionMismatch("q-table and task dimensions differ".into()));
    }
    evaluate(task, n_episodes, rng, |level, agent, _| q.greedy(agent, level))
}

pub(crate) fn check_policy(task: &TaskSpec, params: &PolicyParams) -> Result<()> {
    if params.n_levels != task.n_levels() || params.n_agents != task.n_agents || params.n_actions != task.n_actions {
        return Err(Error::DimensionMismatch(alloc::format!(
            "policy built for {} levels x {} agents x {} actions, task {} has {} x {} x {}",
            params.n_levels,
            params.n_agents,
            params.n_actions,
            task.tag,
            task.n_levels(),
            task.n_agents,
            task.n_actions
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::build_task;
    use crate::rng;

    #[test]
    fn total_is_sum_of_levels() {
        let task = build_task("1A4B2C", 3, 10).unwrap();
        let p = PolicyParams::init(7, 3, 10, 8, &mut rng::seeded(0));
        let r = evaluate_policy(&task, &p, 50, &mut rng::seeded(1)).unwrap();
        assert_eq!(r.total, r.per_level.iter().sum::<f64>());
        assert_eq!(r.per_level.len(), 7);
    }

    #[test]
    fn deterministic_capacity_overflow_scores_zero() {
        let task = build_task("1A0B6C", 4, 10).unwrap();
        let mut q = QTable::zeros(4, 7, 10);
        for i in 0..4 {
            for l in 0..7 {
                // everybody on the level's target: 1 on Lv-A, 0 on every Lv-C
                let t = task.levels[l].target_action;
                let o = (i * 7 + l) * 10 + t;
                q.online[o] = 1.0;
            }
        }
        let r = evaluate_qtable(&task, &q, 10, &mut rng::seeded(0)).unwrap();
        assert_eq!(r.per_level[0], 1.0);
        assert!(r.per_level[1..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn greedy_mode_plays_the_argmax() {
        // a single static level where the bias alone makes action 4 the mode
        let task = crate::env::TaskSpec::new(vec![crate::env::LevelSpec::static_action(4, 10).unwrap()], 3, 10).unwrap();
        let mut p = PolicyParams::zeros(1, 3, 10, 8);
        p.heads[0].bias[4] = 0.5;
        let greedy = evaluate_policy_with(&task, &p, 20, &mut rng::seeded(2), PolicyEvalMode::Greedy).unwrap();
        assert_eq!(greedy.total, 1.0);
        let sampled = evaluate_policy(&task, &p, 20, &mut rng::seeded(2)).unwrap();
        assert!(sampled.total < 1.0);
    }

    #[test]
    fn dimension_mismatch() {
        let task = build_task("1A4B2C", 3, 10).unwrap();
        let p = PolicyParams::init(7, 4, 10, 8, &mut rng::seeded(0));
        assert!(evaluate_policy(&task, &p, 5, &mut rng::seeded(1)).is_err());
    }
}
