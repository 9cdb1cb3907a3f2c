use alloc::vec::Vec;

use crate::env::Observation;
use crate::error::{Error, Result};

/// Training buffer, rectangular over `episodes × levels × agents`.
///
/// Team reward, advantage and resonance flag are per step; action and the two
/// probabilities are per step and agent.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeBatch {
    pub n_levels: usize,
    pub n_agents: usize,
    pub n_actions: usize,
    actions: Vec<u32>,
    behavior_probs: Vec<f64>,
    raw_probs: Vec<f64>,
    rewards: Vec<f64>,
    advantages: Vec<f64>,
    resonated: Vec<bool>,
}

/// One `(step, agent)` record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub episode: usize,
    pub observation: Observation,
    pub action: usize,
    /// Probability under the sampling distribution actually used.
    pub behavior_prob: f64,
    /// Probability under the raw policy at collection time.
    pub raw_prob: f64,
    pub reward: f64,
    pub advantage: f64,
    pub resonated: bool,
}

impl EpisodeBatch {
    pub fn new(n_levels: usize, n_agents: usize, n_actions: usize) -> Self {
        Self {
            n_levels,
            n_agents,
            n_actions,
            actions: Vec::new(),
            behavior_probs: Vec::new(),
            raw_probs: Vec::new(),
            rewards: Vec::new(),
            advantages: Vec::new(),
            resonated: Vec::new(),
        }
    }

    pub fn with_capacity(n_levels: usize, n_agents: usize, n_actions: usize, episodes: usize) -> Self {
        let steps = episodes * n_levels;
        let mut b = Self::new(n_levels, n_agents, n_actions);
        b.actions.reserve(steps * n_agents);
        b.behavior_probs.reserve(steps * n_agents);
        b.raw_probs.reserve(steps * n_agents);
        b.rewards.reserve(steps);
        b.advantages.reserve(steps);
        b.resonated.reserve(steps);
        b
    }

    /// Appends the next step of the current episode.
    pub fn push_step(
        &mut self,
        actions: &[usize],
        behavior_probs: &[f64],
        raw_probs: &[f64],
        reward: f64,
        resonated: bool,
    ) -> Result<()> {
        let n = self.n_agents;
        if actions.len() != n || behavior_probs.len() != n || raw_probs.len() != n {
            return Err(Error::DimensionMismatch("step record length".into()));
        }
        if behavior_probs.iter().any(|&p| !(p > 0.0 && p <= 1.0)) {
            return Err(Error::InvalidConfig("behavior probabilities must lie in (0, 1]".into()));
        }
        if actions.iter().any(|&a| a >= self.n_actions) {
            return Err(Error::DimensionMismatch("action out of range".into()));
        }
        self.actions.extend(actions.iter().map(|&a| a as u32));
        self.behavior_probs.extend_from_slice(behavior_probs);
        self.raw_probs.extend_from_slice(raw_probs);
        self.rewards.push(reward);
        self.advantages.push(reward);
        self.resonated.push(resonated);
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        self.rewards.len()
    }

    pub fn n_episodes(&self) -> usize {
        self.n_steps() / self.n_levels
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// Every episode is complete.
    pub fn is_rectangular(&self) -> bool {
        self.n_steps() % self.n_levels == 0
    }

    pub fn reward(&self, step: usize) -> f64 {
        self.rewards[step]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn advantages(&self) -> &[f64] {
        &self.advantages
    }

    pub fn resonated(&self, step: usize) -> bool {
        self.resonated[step]
    }

    pub fn action(&self, step: usize, agent: usize) -> usize {
        self.actions[step * self.n_agents + agent] as usize
    }

    pub fn behavior_prob(&self, step: usize, agent: usize) -> f64 {
        self.behavior_probs[step * self.n_agents + agent]
    }

    pub fn raw_prob(&self, step: usize, agent: usize) -> f64 {
        self.raw_probs[step * self.n_agents + agent]
    }

    /// Sets `advantage = reward − baseline[level]` for every step.
    pub fn set_advantages_from_baseline(&mut self, baseline: &[f64]) {
        for (s, (adv, r)) in self.advantages.iter_mut().zip(&self.rewards).enumerate() {
            *adv = r - baseline[s % self.n_levels];
        }
    }

    /// Rescales advantages to unit population standard deviation over the
    /// batch; a batch with (near) constant advantages is left untouched.
    pub fn normalize_advantages(&mut self) {
        let (_, std) = crate::math::mean_std(&self.advantages);
        if std > 1e-8 {
            for a in &mut self.advantages {
                *a /= std;
            }
        }
    }

    pub fn set_advantages(&mut self, advantages: Vec<f64>) -> Result<()> {
        if advantages.len() != self.n_steps() {
            return Err(Error::DimensionMismatch("advantage count".into()));
        }
        self.advantages = advantages;
        Ok(())
    }

    /// Mean team reward per level over the batch.
    pub fn level_mean_rewards(&self) -> Vec<f64> {
        let mut sums = alloc::vec![0.0; self.n_levels];
        for (s, r) in self.rewards.iter().enumerate() {
            sums[s % self.n_levels] += r;
        }
        let e = self.n_episodes().max(1) as f64;
        sums.iter().map(|s| s / e).collect()
    }

    pub fn sample(&self, step: usize, agent: usize) -> Sample {
        let k = step * self.n_agents + agent;
        Sample {
            episode: step / self.n_levels,
            observation: Observation {
                level_index: step % self.n_levels,
                agent_id: agent,
            },
            action: self.actions[k] as usize,
            behavior_prob: self.behavior_probs[k],
            raw_prob: self.raw_probs[k],
            reward: self.rewards[step],
            advantage: self.advantages[step],
            resonated: self.resonated[step],
        }
    }

    pub fn samples(&self) -> impl Iterator<Item = Sample> + '_ {
        (0..self.n_steps()).flat_map(move |s| (0..self.n_agents).map(move |i| self.sample(s, i)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_and_views() {
        let mut b = EpisodeBatch::new(2, 2, 3);
        b.push_step(&[0, 1], &[0.5, 1.0], &[0.5, 0.2], 1.0, false).unwrap();
        b.push_step(&[2, 2], &[0.3, 0.3], &[0.3, 0.3], 0.5, true).unwrap();
        assert!(b.is_rectangular());
        assert_eq!(b.n_episodes(), 1);
        let s = b.sample(1, 1);
        assert_eq!(s.observation, Observation { level_index: 1, agent_id: 1 });
        assert_eq!(s.action, 2);
        assert!(s.resonated);
        assert_eq!(b.samples().count(), 4);
        b.set_advantages_from_baseline(&[0.25, 0.5]);
        assert_eq!(b.advantages(), &[0.75, 0.0]);
        assert_eq!(b.level_mean_rewards(), alloc::vec![1.0, 0.5]);
    }

    #[test]
    fn rejects_bad_records() {
        let mut b = EpisodeBatch::new(2, 2, 3);
        assert!(b.push_step(&[0], &[0.5], &[0.5], 0.0, false).is_err());
        assert!(b.push_step(&[0, 1], &[0.0, 0.5], &[0.5, 0.5], 0.0, false).is_err());
        assert!(b.push_step(&[0, 3], &[0.5, 0.5], &[0.5, 0.5], 0.0, false).is_err());
        assert!(b.is_empty());
    }
}
