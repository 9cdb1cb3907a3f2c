//! Two-stage training: plain policy gradient first, then the same trainer
//! with Policy Resonance switched on and `η` ramped up.

use alloc::vec::Vec;

use crate::env::TaskSpec;
use crate::error::{Error, Result};
use crate::resonance::ResonanceConfig;
use crate::rng::{self, LabRng};
use crate::trainers::eval::{evaluate_policy_with, evaluate_qtable, EvalReport, PolicyEvalMode};
use crate::trainers::optim::Adam;
use crate::trainers::ppo::{collect_rollouts, PgTrainerConfig, PpoTrainer, ResonanceContext, RolloutStreams, UpdateStats};
use crate::trainers::vd::{epsilon_at, vd_act, vd_update, QTable, ReplayBuffer, VdTrainerConfig};
use crate::policy::PolicyParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StagePlan {
    pub stage1_episodes: u64,
    pub stage2_episodes: u64,
    pub resonance: ResonanceConfig,
    /// Number of evenly spaced evaluations over the whole run.
    pub eval_points: u64,
    pub eval_episodes: usize,
    pub eval_mode: PolicyEvalMode,
}

impl StagePlan {
    pub fn new(stage1_episodes: u64, stage2_episodes: u64, resonance: ResonanceConfig) -> Self {
        Self {
            stage1_episodes,
            stage2_episodes,
            resonance,
            eval_points: 100,
            eval_episodes: 192,
            eval_mode: PolicyEvalMode::Sample,
        }
    }

    pub fn total_episodes(&self) -> u64 {
        self.stage1_episodes + self.stage2_episodes
    }

    fn eval_threshold(&self, index: u64) -> u64 {
        let total = self.total_episodes();
        // ceil(total * index / points) without overflow for sane budgets
        (total * index).div_ceil(self.eval_points.max(1))
    }
}

/// One evaluation point of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub episode: u64,
    pub stage: u8,
    pub eta: f64,
    /// Exploration rate (value-based runs only).
    pub epsilon: f64,
    pub eval: EvalReport,
    /// Mean total training reward of the most recent batch.
    pub train_reward: f64,
    pub entropy: f64,
    pub loss: f64,
    pub surrogate: f64,
    pub clip_fraction: f64,
    /// Largest body-gradient norm since the previous row or the start of
    /// the stage, whichever is later.
    pub body_grad_norm: f64,
    pub td_loss: f64,
}

/// Hooks for logging and checkpointing; every method defaults to a no-op.
pub trait TrainingObserver {
    fn on_row(&mut self, _row: &LogRow) {}
    fn on_policy_checkpoint(&mut self, _label: &str, _params: &PolicyParams) {}
    fn on_qtable_checkpoint(&mut self, _label: &str, _q: &QTable) {}
}

impl TrainingObserver for () {}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub log: Vec<LogRow>,
    pub params: PolicyParams,
    pub final_eval: EvalReport,
}

struct RowAccumulator {
    body_grad_norm: f64,
    last: UpdateStats,
    train_reward: f64,
}

/// Runs stage 1 without resonance and stage 2 with `plan.resonance`.
///
/// PR-Fast duplicates the policy head per agent and freezes the body at the
/// stage boundary. Policies are checkpointed as `stage1` and `final`.
pub fn run_two_stage(
    task: &TaskSpec,
    cfg: &PgTrainerConfig,
    plan: &StagePlan,
    seed: u64,
    observer: &mut dyn TrainingObserver,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if plan.resonance.enabled {
        plan.resonance.validate(task.n_actions)?;
    }
    if plan.total_episodes() == 0 {
        return Err(Error::InvalidConfig("training budget is zero episodes".into()));
    }
    let mut trainer = PpoTrainer::new(task, *cfg, seed)?;
    let mut streams = RolloutStreams::from_seed(seed);
    let mut eval_rng = rng::derive(seed, rng::purpose::EVAL);
    let mut log = Vec::new();
    let mut acc = RowAccumulator {
        body_grad_norm: 0.0,
        last: UpdateStats::default(),
        train_reward: 0.0,
    };
    let mut done: u64 = 0;
    let mut next_eval = 1u64;

    for stage in [1u8, 2u8] {
        let (budget, resonance) = if stage == 1 {
            (plan.stage1_episodes, ResonanceConfig::disabled())
        } else {
            (plan.stage2_episodes, plan.resonance)
        };
        if stage == 2 {
            observer.on_policy_checkpoint("stage1", &trainer.params);
            if budget > 0 && resonance.enabled && resonance.fast {
                trainer.clone_heads()?;
            }
        }
        let mut ctx = ResonanceContext::new(resonance);
        let mut stage_done = 0u64;
        acc.body_grad_norm = 0.0;
        while stage_done < budget {
            let chunk = (budget - stage_done).min(cfg.batch_episodes as u64) as usize;
            let mut batch = collect_rollouts(task, &trainer.params, &mut ctx, chunk, &mut streams)?;
            acc.train_reward = batch.rewards().iter().sum::<f64>() / chunk as f64;
            let stats = trainer.update(&mut batch)?;
            acc.body_grad_norm = acc.body_grad_norm.max(stats.max_body_grad_norm);
            acc.last = stats;
            stage_done += chunk as u64;
            done += chunk as u64;
            while next_eval <= plan.eval_points && done >= plan.eval_threshold(next_eval) {
                let eval = evaluate_policy_with(task, &trainer.params, plan.eval_episodes, &mut eval_rng, plan.eval_mode)?;
                let row = LogRow {
                    episode: done,
                    stage,
                    eta: ctx.current_eta(),
                    epsilon: 0.0,
                    eval,
                    train_reward: acc.train_reward,
                    entropy: acc.last.last.entropy,
                    loss: acc.last.last.loss,
                    surrogate: acc.last.last.surrogate,
                    clip_fraction: acc.last.last.clip_fraction,
                    body_grad_norm: acc.body_grad_norm,
                    td_loss: 0.0,
                };
                acc.body_grad_norm = 0.0;
                observer.on_row(&row);
                log.push(row);
                next_eval += 1;
            }
        }
    }
    observer.on_policy_checkpoint("final", &trainer.params);
    let final_eval = match log.last() {
        Some(row) if row.episode == done => row.eval.clone(),
        _ => evaluate_policy_with(task, &trainer.params, plan.eval_episodes, &mut eval_rng, plan.eval_mode)?,
    };
    Ok(TrainOutcome {
        log,
        params: trainer.params,
        final_eval,
    })
}

#[derive(Debug, Clone)]
pub struct VdOutcome {
    pub log: Vec<LogRow>,
    pub qtable: QTable,
    pub final_eval: EvalReport,
}

/// Trains the additive value-decomposition baseline for `episodes`
/// episodes, one replay update per episode once the buffer holds a batch.
pub fn run_value_decomposition(
    task: &TaskSpec,
    cfg: &VdTrainerConfig,
    episodes: u64,
    eval_points: u64,
    eval_episodes: usize,
    seed: u64,
    observer: &mut dyn TrainingObserver,
) -> Result<VdOutcome> {
    cfg.validate()?;
    if episodes == 0 {
        return Err(Error::InvalidConfig("training budget is zero episodes".into()));
    }
    let (l, n) = (task.n_levels(), task.n_agents);
    let mut q = QTable::zeros(n, l, task.n_actions);
    let mut optimizer = Adam::new(cfg.learning_rate);
    let mut replay = ReplayBuffer::new(cfg.replay_capacity);
    let mut act_rng: LabRng = rng::derive(seed, rng::purpose::SAMPLING);
    let mut env = crate::env::EnvState::with_rng(task, rng::derive(seed, rng::purpose::ENV));
    let mut eval_rng = rng::derive(seed, rng::purpose::EVAL);
    let mut env_steps = 0u64;
    let mut log = Vec::new();
    let mut next_eval = 1u64;
    let mut td_loss = 0.0;
    let points = eval_points.max(1);

    for episode in 1..=episodes {
        let epsilon = epsilon_at(cfg, env_steps);
        let mut actions = Vec::with_capacity(l * n);
        let mut rewards = Vec::with_capacity(l);
        env.restart();
        while !env.is_done() {
            let joint = vd_act(&q, env.level_index(), epsilon, &mut act_rng);
            let out = env.step(&joint)?;
            actions.extend_from_slice(joint.actions());
            rewards.push(out.reward);
        }
        env_steps += l as u64;
        let train_reward: f64 = rewards.iter().sum();
        replay.push(actions, rewards);
        if replay.len() >= cfg.batch_episodes {
            let idx = replay.sample_indices(cfg.batch_episodes, &mut act_rng);
            td_loss = vd_update(&mut q, &mut optimizer, &replay, &idx, cfg)?.td_loss;
        }
        if episode % cfg.target_sync_interval == 0 {
            q.sync_target();
        }
        while next_eval <= points && episode >= (episodes * next_eval).div_ceil(points) {
            let eval = evaluate_qtable(task, &q, eval_episodes, &mut eval_rng)?;
            let row = LogRow {
                episode,
                stage: 1,
                eta: 0.0,
                epsilon: epsilon_at(cfg, env_steps),
                eval,
                train_reward,
                entropy: 0.0,
                loss: 0.0,
                surrogate: 0.0,
                clip_fraction: 0.0,
                body_grad_norm: 0.0,
                td_loss,
            };
            observer.on_row(&row);
            log.push(row);
            next_eval += 1;
        }
    }
    observer.on_qtable_checkpoint("final", &q);
    let final_eval = log.last().map(|r| r.eval.clone()).ok_or(Error::EmptyBatch)?;
    Ok(VdOutcome {
        log,
        qtable: q,
        final_eval,
    })
}
