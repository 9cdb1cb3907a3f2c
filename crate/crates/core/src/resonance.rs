//! Policy Resonance: synchronized exploitation for a team of agents.
//!
//! With probability `η` the team enters the *resonated* state and every
//! agent plays its greedy action `u* = argmax π_i`. Otherwise agents sample
//! independently from a compensating distribution
//!
//! ```text
//! π'(u* | ε̄) = max(p_min, (π(u*) − η) / (1 − η))
//! π'(u  | ε̄) = π(u) · (1 − π'(u* | ε̄)) / (1 − π(u*))      for u ≠ u*
//! ```
//!
//! chosen so that `η·δ_{u*} + (1 − η)·π'(·|ε̄) = π` whenever the clamp is
//! inactive: each agent's marginal policy is unchanged and the host trainer
//! needs no modification.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::env::JointAction;
use crate::error::{Error, Result};
use crate::policy::{argmax_of, sample_index, ActionDistribution};
use crate::rng::LabRng;

pub const DEFAULT_P_MIN: f64 = 0.05;
pub const DEFAULT_ETA_MAX: f64 = 0.75;

/// Below this gap `1 − π(u*)` the compensating distribution is taken as
/// `δ_{u*}`, the limit of the formula.
const DEGENERATE_GAP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Granularity {
    /// One state draw per episode.
    Episode,
    /// A fresh draw before every step.
    Step,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResonanceConfig {
    pub enabled: bool,
    pub eta_max: f64,
    /// Episodes over which `η` ramps from 0 to `eta_max`.
    pub ramp_episodes: u64,
    pub p_min: f64,
    pub granularity: Granularity,
    /// PR-Fast: freeze the body and train per-agent heads once PR starts.
    pub fast: bool,
}

impl Default for ResonanceConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            eta_max: DEFAULT_ETA_MAX,
            ramp_episodes: 50_000,
            p_min: DEFAULT_P_MIN,
            granularity: Granularity::Episode,
            fast: false,
        }
    }
}

impl ResonanceConfig {
    pub fn disabled() -> Self {
        Self::default()
    }

    pub fn validate(&self, n_actions: usize) -> Result<()> {
        if !(0.0..1.0).contains(&self.eta_max) {
            return Err(Error::InvalidConfig(format!(
                "pr.eta_max must lie in [0, 1), got {}",
                self.eta_max
            )));
        }
        let bound = 1.0 / n_actions as f64;
        if !(self.p_min > 0.0 && self.p_min <= bound + 1e-15) {
            return Err(Error::InvalidConfig(format!(
                "pr.p_min must lie in (0, 1/n_k] = (0, {bound}], got {}",
                self.p_min
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResonanceState {
    pub resonated: bool,
    pub eta_current: f64,
}

impl ResonanceState {
    pub fn non_resonated(eta: f64) -> Self {
        Self {
            resonated: false,
            eta_current: eta,
        }
    }
}

/// Linear ramp `min(η_max, η_max · episode / M_pr)`; 0 when disabled.
pub fn schedule_eta(cfg: &ResonanceConfig, episode_index: u64) -> f64 {
    if !cfg.enabled {
        return 0.0;
    }
    if cfg.ramp_episodes == 0 || episode_index >= cfg.ramp_episodes {
        return cfg.eta_max;
    }
    (cfg.eta_max * episode_index as f64 / cfg.ramp_episodes as f64).min(cfg.eta_max)
}

/// Resonated with probability `eta`, from exactly one uniform draw.
pub fn draw_state(eta: f64, rng: &mut LabRng) -> ResonanceState {
    let u: f64 = rng.gen();
    ResonanceState {
        resonated: u < eta,
        eta_current: eta,
    }
}

/// Writes the non-resonated sampling distribution for `raw` into `out`.
///
/// `p_min = 0` gives the unclamped map, valid while `eta ≤ raw(u*)`.
pub fn non_resonated_into(raw: &[f64], eta: f64, p_min: f64, out: &mut [f64]) {
    if eta == 0.0 {
        out.copy_from_slice(raw);
        return;
    }
    let star = argmax_of(raw);
    let top = raw[star];
    let gap = 1.0 - top;
    if gap < DEGENERATE_GAP {
        out.fill(0.0);
        out[star] = 1.0;
        return;
    }
    let kept = p_min.max((top - eta) / (1.0 - eta));
    let scale = (1.0 - kept) / gap;
    for (o, &p) in out.iter_mut().zip(raw) {
        *o = p * scale;
    }
    out[star] = kept;
}

pub fn non_resonated_distribution(raw: &ActionDistribution, eta: f64, p_min: f64) -> Result<ActionDistribution> {
    if !(0.0..1.0).contains(&eta) {
        return Err(Error::InvalidConfig(format!("eta must lie in [0, 1), got {eta}")));
    }
    let mut out = vec![0.0; raw.n_actions()];
    non_resonated_into(raw.probs(), eta, p_min, &mut out);
    Ok(ActionDistribution::from_vec_unchecked(out))
}

/// Whether the `p_min` clamp changes the greedy probability for this input.
pub fn clamp_active(raw: &[f64], eta: f64, p_min: f64) -> bool {
    let top = raw[argmax_of(raw)];
    eta > 0.0 && (top - eta) / (1.0 - eta) < p_min
}

/// Joint greedy action, one argmax per agent.
pub fn resonated_action(raw_dists: &[ActionDistribution]) -> JointAction {
    JointAction::from_vec_unchecked(raw_dists.iter().map(|d| argmax_of(d.probs())).collect())
}

/// Samples one joint action and the per-agent probability of each chosen
/// action under the distribution actually used.
///
/// Resonated: greedy joint action, probabilities 1. Non-resonated:
/// independent draws from [`non_resonated_distribution`]. Disabled:
/// independent draws from `raw`.
pub fn sample_joint(
    raw_dists: &[ActionDistribution],
    state: ResonanceState,
    cfg: &ResonanceConfig,
    rng: &mut LabRng,
) -> (JointAction, Vec<f64>) {
    let mut actions = Vec::with_capacity(raw_dists.len());
    let mut probs = Vec::with_capacity(raw_dists.len());
    let mut scratch = Vec::new();
    for d in raw_dists {
        scratch.resize(d.n_actions(), 0.0);
        let (a, p) = sample_agent(d.probs(), state, cfg, rng, &mut scratch);
        actions.push(a);
        probs.push(p);
    }
    (JointAction::from_vec_unchecked(actions), probs)
}

/// Single-agent step of [`sample_joint`]; `scratch` must have `raw.len()`
/// entries.
pub fn sample_agent(
    raw: &[f64],
    state: ResonanceState,
    cfg: &ResonanceConfig,
    rng: &mut LabRng,
    scratch: &mut [f64],
) -> (usize, f64) {
    if !cfg.enabled {
        let a = sample_index(raw, rng.gen());
        return (a, raw[a]);
    }
    if state.resonated {
        return (argmax_of(raw), 1.0);
    }
    non_resonated_into(raw, state.eta_current, cfg.p_min, scratch);
    let a = sample_index(scratch, rng.gen());
    (a, scratch[a])
}

/// Tracks the resonance state across an episode at the configured
/// granularity.
#[derive(Debug, Clone)]
pub struct Resonator {
    cfg: ResonanceConfig,
    state: ResonanceState,
}

impl Resonator {
    pub fn new(cfg: ResonanceConfig) -> Self {
        Self {
            cfg,
            state: ResonanceState::non_resonated(0.0),
        }
    }

    pub fn config(&self) -> &ResonanceConfig {
        &self.cfg
    }

    pub fn state(&self) -> ResonanceState {
        self.state
    }

    /// Sets `η` for the coming episode and, at episode granularity, draws
    /// the state. Consumes no randomness while disabled.
    pub fn begin_episode(&mut self, eta: f64, rng: &mut LabRng) {
        self.state = ResonanceState::non_resonated(eta);
        if self.cfg.enabled && self.cfg.granularity == Granularity::Episode {
            self.state = draw_state(eta, rng);
        }
    }

    pub fn before_step(&mut self, rng: &mut LabRng) {
        if self.cfg.enabled && self.cfg.granularity == Granularity::Step {
            self.state = draw_state(self.state.eta_current, rng);
        }
    }
}
