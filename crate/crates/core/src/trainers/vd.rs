//! Additive value decomposition with ε-greedy exploration.
//!
//! Each agent keeps a tabular row `Q_i(level, ·)`; the team value is
//! `Q_tot(level, u) = Σ_i Q_i(level, u_i)` and all rows are trained jointly
//! on the squared TD error of `Q_tot`. This stands in for a mixing network:
//! the value-based failure it is meant to exhibit comes from independent
//! ε-greedy noise, not from the mixer.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::env::JointAction;
use crate::error::{Error, Result};
use crate::policy::argmax_of;
use crate::rng::LabRng;
use crate::trainers::optim::Adam;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VdTrainerConfig {
    pub learning_rate: f64,
    pub epsilon_start: f64,
    pub epsilon_min: f64,
    /// Environment steps over which ε decays linearly.
    pub epsilon_anneal_steps: u64,
    /// Replay capacity in episodes.
    pub replay_capacity: usize,
    pub batch_episodes: usize,
    pub target_sync_interval: u64,
    pub gamma: f64,
}

impl Default for VdTrainerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            epsilon_start: 1.0,
            epsilon_min: 0.1,
            epsilon_anneal_steps: 200_000,
            replay_capacity: 5000,
            batch_episodes: 64,
            target_sync_interval: 200,
            gamma: 0.99,
        }
    }
}

impl VdTrainerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if !(0.0 <= self.epsilon_min && self.epsilon_min <= self.epsilon_start && self.epsilon_start <= 1.0) {
            return bad("need 0 <= epsilon_min <= epsilon_start <= 1");
        }
        if self.replay_capacity == 0 || self.batch_episodes == 0 {
            return bad("replay_capacity and batch_episodes must be >= 1");
        }
        if self.target_sync_interval == 0 {
            return bad("target_sync_interval must be >= 1");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        Ok(())
    }
}

/// Linear decay from `epsilon_start` to `epsilon_min`.
pub fn epsilon_at(cfg: &VdTrainerConfig, env_steps: u64) -> f64 {
    if cfg.epsilon_anneal_steps == 0 || env_steps >= cfg.epsilon_anneal_steps {
        return cfg.epsilon_min;
    }
    let frac = env_steps as f64 / cfg.epsilon_anneal_steps as f64;
    cfg.epsilon_start + (cfg.epsilon_min - cfg.epsilon_start) * frac
}

/// Per-agent, per-level action values with a target copy. Row
/// `(agent, level)` starts at `(agent * n_levels + level) * n_actions`.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    pub n_agents: usize,
    pub n_levels: usize,
    pub n_actions: usize,
    pub online: Vec<f64>,
    pub target: Vec<f64>,
}

impl QTable {
    pub fn zeros(n_agents: usize, n_levels: usize, n_actions: usize) -> Self {
        let len = n_agents * n_levels * n_actions;
        Self {
            n_agents,
            n_levels,
            n_actions,
            online: vec![0.0; len],
            target: vec![0.0; len],
        }
    }

    fn offset(&self, agent: usize, level: usize) -> usize {
        (agent * self.n_levels + level) * self.n_actions
    }

    pub fn row(&self, agent: usize, level: usize) -> &[f64] {
        let o = self.offset(agent, level);
        &self.online[o..o + self.n_actions]
    }

    pub fn target_row(&self, agent: usize, level: usize) -> &[f64] {
        let o = self.offset(agent, level);
        &self.target[o..o + self.n_actions]
    }

    pub fn greedy(&self, agent: usize, level: usize) -> usize {
        argmax_of(self.row(agent, level))
    }

    pub fn sync_target(&mut self) {
        self.target.copy_from_slice(&self.online);
    }

    /// `Σ_i Q_i(level, u_i)` on the online table.
    pub fn team_value(&self, level: usize, actions: &[usize]) -> f64 {
        actions
            .iter()
            .enumerate()
            .map(|(i, &a)| self.row(i, level)[a])
            .sum()
    }

    /// `Σ_i max_a Q_i^target(level, a)`.
    pub fn target_max_value(&self, level: usize) -> f64 {
        (0..self.n_agents)
            .map(|i| self.target_row(i, level).iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .sum()
    }

    pub fn validate(&self) -> Result<()> {
        let len = self.n_agents * self.n_levels * self.n_actions;
        if self.online.len() != len || self.target.len() != len {
            return Err(Error::DimensionMismatch("q-table length".into()));
        }
        if self.online.iter().chain(&self.target).any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("q-table holds non-finite values".into()));
        }
        Ok(())
    }
}

/// ε-greedy joint action: each agent independently explores uniformly with
/// probability `epsilon`, otherwise plays its greedy action.
pub fn vd_act(qtable: &QTable, level: usize, epsilon: f64, rng: &mut LabRng) -> JointAction {
    let actions = (0..qtable.n_agents)
        .map(|i| {
            let explore: f64 = rng.gen();
            if explore < epsilon {
                rng.gen_range(0..qtable.n_actions)
            } else {
                qtable.greedy(i, level)
            }
        })
        .collect();
    JointAction::from_vec_unchecked(actions)
}

/// Episode store: per-level joint actions and team rewards.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    episodes: VecDeque<(Vec<usize>, Vec<f64>)>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            episodes: VecDeque::with_capacity(capacity.min(8192)),
        }
    }

    /// `actions` is `levels × agents`, `rewards` has one entry per level.
    pub fn push(&mut self, actions: Vec<usize>, rewards: Vec<f64>) {
        if self.episodes.len() == self.capacity {
            self.episodes.pop_front();
        }
        self.episodes.push_back((actions, rewards));
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    /// Uniform sample of `n` episode indices, with replacement.
    pub fn sample_indices(&self, n: usize, rng: &mut LabRng) -> Vec<usize> {
        (0..n).map(|_| rng.gen_range(0..self.episodes.len())).collect()
    }

    pub fn episode(&self, index: usize) -> (&[usize], &[f64]) {
        let (a, r) = &self.episodes[index];
        (a, r)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct VdUpdateStats {
    pub td_loss: f64,
    pub transitions: usize,
}

/// One gradient step on the mean squared TD error of `Q_tot` over the
/// episodes in `indices`.
///
/// Target: `r + γ Σ_i max_a Q_i^target(next, a)`, or `r` at the last level.
/// Each `Q_i(level, u_i)` receives the gradient of `½δ²` through the sum.
pub fn vd_update(
    qtable: &mut QTable,
    optimizer: &mut Adam,
    replay: &ReplayBuffer,
    indices: &[usize],
    cfg: &VdTrainerConfig,
) -> Result<VdUpdateStats> {
    if replay.is_empty() || indices.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let (n, l) = (qtable.n_agents, qtable.n_levels);
    let mut grad = vec![0.0; qtable.online.len()];
    let mut loss = 0.0;
    let mut count = 0usize;
    let next_values: Vec<f64> = (0..l).map(|lv| qtable.target_max_value(lv)).collect();
    for &e in indices {
        let (actions, rewards) = replay.episode(e);
        for level in 0..l {
            let joint = &actions[level * n..(level + 1) * n];
            let mut target = rewards[level];
            if level + 1 < l {
                target += cfg.gamma * next_values[level + 1];
            }
            let delta = target - qtable.team_value(level, joint);
            loss += 0.5 * delta * delta;
            count += 1;
            for (i, &a) in joint.iter().enumerate() {
                grad[qtable.offset(i, level) + a] -= delta;
            }
        }
    }
    let inv = 1.0 / count as f64;
    for g in &mut grad {
        *g *= inv;
    }
    let len = grad.len();
    optimizer.step(qtable.online.iter_mut(), grad.into_iter(), len, 0);
    Ok(VdUpdateStats {
        td_loss: loss * inv,
        transitions: count,
    })
}
