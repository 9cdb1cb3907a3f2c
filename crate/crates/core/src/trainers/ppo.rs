//! PPO-style multi-agent policy gradient with a shared policy.
//!
//! FME levels are single-step, so the advantage of a step is the team
//! reward minus a running per-level mean; no critic is learned.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::env::{EnvState, JointAction, TaskSpec};
use crate::error::{Error, Result};
use crate::math;
use crate::policy::{policy_gradient, EpisodeBatch, PolicyParams, RatioReference, SurrogateConfig, SurrogateStats};
use crate::resonance::{sample_agent, schedule_eta, ResonanceConfig, Resonator};
use crate::rng::{self, LabRng};
use crate::trainers::optim::Adam;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgTrainerConfig {
    pub learning_rate: f64,
    pub batch_episodes: usize,
    pub update_epochs: usize,
    pub clip: f64,
    pub dual_clip: f64,
    pub entropy_coef: f64,
    pub gamma: f64,
    pub hidden: usize,
    /// Weight of the previous baseline when folding in a batch's level means.
    pub baseline_decay: f64,
    /// Divide advantages by their batch standard deviation.
    pub normalize_advantages: bool,
    pub ratio_reference: RatioReference,
    pub include_resonated: bool,
}

impl Default for PgTrainerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-4,
            batch_episodes: 512,
            update_epochs: 24,
            clip: 0.2,
            dual_clip: 3.0,
            entropy_coef: 0.05,
            gamma: 0.99,
            hidden: crate::policy::DEFAULT_HIDDEN,
            baseline_decay: 0.0,
            normalize_advantages: true,
            ratio_reference: RatioReference::Raw,
            include_resonated: true,
        }
    }
}

impl PgTrainerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if !(self.clip > 0.0) {
            return bad("clip must be > 0");
        }
        if !(self.dual_clip > 1.0) {
            return bad("dual_clip must be > 1");
        }
        if self.batch_episodes == 0 {
            return bad("batch_episodes must be >= 1");
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be positive");
        }
        if self.hidden == 0 {
            return bad("hidden must be >= 1");
        }
        if !(0.0..1.0).contains(&self.baseline_decay) {
            return bad("baseline_decay must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn surrogate(&self) -> SurrogateConfig {
        SurrogateConfig {
            clip: self.clip,
            dual_clip: self.dual_clip,
            entropy_coef: self.entropy_coef,
            ratio_reference: self.ratio_reference,
            include_resonated: self.include_resonated,
        }
    }
}

/// Resonance configuration plus the count of episodes since it was enabled,
/// which drives the `η` ramp.
#[derive(Debug, Clone)]
pub struct ResonanceContext {
    resonator: Resonator,
    episodes_since_enabled: u64,
}

impl ResonanceContext {
    pub fn new(cfg: ResonanceConfig) -> Self {
        Self {
            resonator: Resonator::new(cfg),
            episodes_since_enabled: 0,
        }
    }

    pub fn disabled() -> Self {
        Self::new(ResonanceConfig::disabled())
    }

    pub fn config(&self) -> &ResonanceConfig {
        self.resonator.config()
    }

    pub fn current_eta(&self) -> f64 {
        schedule_eta(self.config(), self.episodes_since_enabled)
    }

    pub fn episodes_since_enabled(&self) -> u64 {
        self.episodes_since_enabled
    }
}

/// Independent random streams used while collecting rollouts.
#[derive(Debug, Clone)]
pub struct RolloutStreams {
    pub env: LabRng,
    pub sampling: LabRng,
    pub resonance: LabRng,
}

impl RolloutStreams {
    pub fn from_seed(seed: u64) -> Self {
        Self {
            env: rng::derive(seed, rng::purpose::ENV),
            sampling: rng::derive(seed, rng::purpose::SAMPLING),
            resonance: rng::derive(seed, rng::purpose::RESONANCE),
        }
    }
}

/// Plays `n_episodes` full episodes and records every `(step, agent)`.
pub fn collect_rollouts(
    task: &TaskSpec,
    params: &PolicyParams,
    resonance: &mut ResonanceContext,
    n_episodes: usize,
    streams: &mut RolloutStreams,
) -> Result<EpisodeBatch> {
    let (l, n, k) = (task.n_levels(), task.n_agents, task.n_actions);
    if params.n_levels != l || params.n_agents != n || params.n_actions != k {
        return Err(Error::DimensionMismatch(format!(
            "policy built for {}x{}x{}, task is {l}x{n}x{k}",
            params.n_levels, params.n_agents, params.n_actions
        )));
    }
    let table = params.forward_all();
    let mut batch = EpisodeBatch::with_capacity(l, n, k, n_episodes);
    let mut env = EnvState::with_rng(task, streams.env.clone());
    let mut scratch = vec![0.0; k];
    let mut actions = vec![0usize; n];
    let mut behavior = vec![0.0; n];
    let mut raw_probs = vec![0.0; n];
    let cfg = *resonance.config();
    for _ in 0..n_episodes {
        let eta = resonance.current_eta();
        resonance.resonator.begin_episode(eta, &mut streams.resonance);
        env.restart();
        while !env.is_done() {
            let level = env.level_index();
            resonance.resonator.before_step(&mut streams.resonance);
            let state = resonance.resonator.state();
            for agent in 0..n {
                let raw = table.probs(level, agent);
                let (a, p) = sample_agent(raw, state, &cfg, &mut streams.sampling, &mut scratch);
                actions[agent] = a;
                behavior[agent] = p;
                raw_probs[agent] = raw[a];
            }
            let joint = JointAction::from_vec_unchecked(actions.clone());
            let out = env.step(&joint)?;
            batch.push_step(&actions, &behavior, &raw_probs, out.reward, state.resonated)?;
        }
        if cfg.enabled {
            resonance.episodes_since_enabled += 1;
        }
    }
    streams.env = env.into_rng();
    Ok(batch)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateStats {
    /// Surrogate statistics at the first epoch (fresh parameters).
    pub first: SurrogateStats,
    pub last: SurrogateStats,
    /// Largest body-gradient L2 norm seen across the epochs.
    pub max_body_grad_norm: f64,
    pub epochs: usize,
}

/// Folds the batch's per-level mean rewards into `baseline`, sets advantages,
/// then takes `update_epochs` Adam steps on the surrogate loss.
///
/// A non-finite loss aborts the update and restores the parameters.
pub fn ppo_update(
    params: &mut PolicyParams,
    optimizer: &mut Adam,
    baseline: &mut Option<Vec<f64>>,
    batch: &mut EpisodeBatch,
    cfg: &PgTrainerConfig,
) -> Result<UpdateStats> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let means = batch.level_mean_rewards();
    let previous_baseline = baseline.clone();
    let base = match baseline.take() {
        Some(prev) => prev
            .iter()
            .zip(&means)
            .map(|(b, m)| cfg.baseline_decay * b + (1.0 - cfg.baseline_decay) * m)
            .collect(),
        None => means,
    };
    batch.set_advantages_from_baseline(&base);
    if cfg.normalize_advantages {
        batch.normalize_advantages();
    }
    *baseline = Some(base);

    let surrogate = cfg.surrogate();
    let snapshot = params.clone();
    let optimizer_snapshot = optimizer.clone();
    let mut stats = UpdateStats::default();
    let len = params.len();
    let frozen_prefix = if params.frozen_body { params.body_len() } else { 0 };
    for epoch in 0..cfg.update_epochs {
        let (grad, s) = policy_gradient(params, batch, &surrogate)?;
        if !s.loss.is_finite() || grad.values().any(|g| !g.is_finite()) {
            *params = snapshot;
            *optimizer = optimizer_snapshot;
            *baseline = previous_baseline;
            return Err(Error::NonFiniteLoss { epoch, loss: s.loss });
        }
        let body_norm = math::sqrt(grad.body_values().map(|g| g * g).sum());
        stats.max_body_grad_norm = stats.max_body_grad_norm.max(body_norm);
        if epoch == 0 {
            stats.first = s;
        }
        stats.last = s;
        stats.epochs = epoch + 1;
        optimizer.step(params.values_mut(), grad.values().copied(), len, frozen_prefix);
    }
    Ok(stats)
}

/// Parameters, optimizer state and baseline of one policy-gradient learner.
#[derive(Debug, Clone)]
pub struct PpoTrainer {
    pub params: PolicyParams,
    pub optimizer: Adam,
    pub baseline: Option<Vec<f64>>,
    pub cfg: PgTrainerConfig,
}

impl PpoTrainer {
    pub fn new(task: &TaskSpec, cfg: PgTrainerConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut init_rng = rng::derive(seed, rng::purpose::INIT);
        let params = PolicyParams::init(task.n_levels(), task.n_agents, task.n_actions, cfg.hidden, &mut init_rng);
        Ok(Self::from_params(params, cfg))
    }

    pub fn from_params(params: PolicyParams, cfg: PgTrainerConfig) -> Self {
        Self {
            params,
            optimizer: Adam::new(cfg.learning_rate),
            baseline: None,
            cfg,
        }
    }

    pub fn update(&mut self, batch: &mut EpisodeBatch) -> Result<UpdateStats> {
        ppo_update(&mut self.params, &mut self.optimizer, &mut self.baseline, batch, &self.cfg)
    }

    /// Switches to per-agent heads with a frozen body; optimizer moments
    /// restart for the new parameter layout.
    pub fn clone_heads(&mut self) -> Result<()> {
        self.params = crate::policy::clone_head_per_agent(&self.params)?;
        self.optimizer.reset();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::build_task;
    use crate::resonance::Granularity;

    #[test]
    fn rollout_shapes_and_disabled_flags() {
        let task = build_task("1A4B2C", 3, 10).unwrap();
        let p = PolicyParams::init(7, 3, 10, 8, &mut rng::seeded(0));
        let mut ctx = ResonanceContext::disabled();
        let mut streams = RolloutStreams::from_seed(1);
        let batch = collect_rollouts(&task, &p, &mut ctx, 16, &mut streams).unwrap();
        assert_eq!(batch.n_episodes(), 16);
        assert_eq!(batch.n_steps(), 16 * 7);
        for s in batch.samples() {
            assert!(!s.resonated);
            assert_eq!(s.behavior_prob, s.raw_prob);
        }
    }

    #[test]
    fn rollouts_are_deterministic() {
        let task = build_task("1A4B2C", 4, 10).unwrap();
        let p = PolicyParams::init(7, 4, 10, 8, &mut rng::seeded(0));
        let cfg = ResonanceConfig {
            enabled: true,
            ramp_episodes: 10,
            granularity: Granularity::Step,
            ..Default::default()
        };
        let run = || {
            let mut ctx = ResonanceContext::new(cfg);
            let mut streams = RolloutStreams::from_seed(5);
            collect_rollouts(&task, &p, &mut ctx, 32, &mut streams).unwrap()
        };
        assert_eq!(run(), run());
        let b = run();
        assert!(b.samples().any(|s| s.resonated && s.behavior_prob == 1.0));
    }

    #[test]
    fn uniform_policy_equal_rewards_moves_little() {
        // every step earns the same reward, so the baseline absorbs it and
        // only the entropy term (already maximal) acts
        let mut trainer = PpoTrainer::from_params(PolicyParams::zeros(1, 2, 10, 8), PgTrainerConfig::default());
        let mut batch = EpisodeBatch::new(1, 2, 10);
        for e in 0..64 {
            let acts = [e % 10, (e * 3) % 10];
            batch.push_step(&acts, &[0.1, 0.1], &[0.1, 0.1], 0.5, false).unwrap();
        }
        let before = trainer.params.forward_all();
        trainer.update(&mut batch).unwrap();
        let after = trainer.params.forward_all();
        for i in 0..2 {
            let tv: f64 = before
                .probs(0, i)
                .iter()
                .zip(after.probs(0, i))
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
                / 2.0;
            assert!(tv <= 1e-3, "tv {tv}");
        }
    }

    #[test]
    fn non_finite_rewards_abort_and_restore() {
        let mut trainer = PpoTrainer::from_params(
            PolicyParams::init(1, 2, 3, 8, &mut rng::seeded(2)),
            PgTrainerConfig::default(),
        );
        let before = trainer.params.clone();
        let mut batch = EpisodeBatch::new(1, 2, 3);
        batch.push_step(&[0, 1], &[0.3, 0.3], &[0.3, 0.3], f64::NAN, false).unwrap();
        batch.push_step(&[0, 1], &[0.3, 0.3], &[0.3, 0.3], 1.0, false).unwrap();
        assert!(matches!(trainer.update(&mut batch), Err(Error::NonFiniteLoss { .. })));
        assert_eq!(trainer.params, before);
    }

    #[test]
    fn config_validation() {
        let mut c = PgTrainerConfig::default();
        assert!(c.validate().is_ok());
        c.dual_clip = 1.0;
        assert!(c.validate().is_err());
        c = PgTrainerConfig {
            clip: 0.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        c = PgTrainerConfig {
            batch_episodes: 0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }
}
