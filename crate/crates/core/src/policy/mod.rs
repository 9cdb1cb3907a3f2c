//! Shared softmax policy over `level one-hot ⊕ agent one-hot` inputs.
//!
//! One hidden `tanh` layer (width 8 by default) feeds a linear head and a
//! softmax. Because inputs are pairs of one-hots, the first layer reduces to
//! summing two weight rows and the bias. Gradients are derived by hand for
//! this fixed architecture.

mod batch;
mod gradient;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::env::Observation;
use crate::error::{Error, Result};
use crate::math;
use crate::rng::LabRng;

pub use batch::{EpisodeBatch, Sample};
pub use gradient::{policy_gradient, surrogate_objective, RatioReference, SurrogateConfig, SurrogateStats};

pub const DEFAULT_HIDDEN: usize = 8;
pub const INIT_RANGE: f64 = 0.05;

/// One agent's probability vector over the discrete actions.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionDistribution {
    probs: Vec<f64>,
}

impl ActionDistribution {
    /// Validates non-negativity and normalization (±1e-9).
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDimensions("empty distribution".into()));
        }
        let sum: f64 = probs.iter().sum();
        if probs.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidDimensions(format!(
                "not a probability vector (sum {sum})"
            )));
        }
        Ok(Self { probs })
    }

    pub(crate) fn from_vec_unchecked(probs: Vec<f64>) -> Self {
        Self { probs }
    }

    pub fn uniform(n_actions: usize) -> Self {
        Self {
            probs: vec![1.0 / n_actions as f64; n_actions],
        }
    }

    pub fn deterministic(action: usize, n_actions: usize) -> Self {
        let mut probs = vec![0.0; n_actions];
        probs[action] = 1.0;
        Self { probs }
    }

    /// Softmax of `logits`, shifted by the max for stability.
    pub fn softmax(logits: &[f64]) -> Self {
        let mut probs = vec![0.0; logits.len()];
        softmax_into(logits, &mut probs);
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, action: usize) -> f64 {
        self.probs[action]
    }

    pub fn n_actions(&self) -> usize {
        self.probs.len()
    }

    /// Natural-log entropy with `0 · ln 0 = 0`.
    pub fn entropy(&self) -> f64 {
        entropy_of(&self.probs)
    }

    /// Inverse-CDF sample from one uniform draw.
    pub fn sample(&self, rng: &mut LabRng) -> usize {
        sample_index(&self.probs, rng.gen())
    }
}

pub(crate) fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = math::exp(l - max);
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

pub(crate) fn entropy_of(probs: &[f64]) -> f64 {
    probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * math::ln(p))
        .sum()
}

pub(crate) fn sample_index(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// Lowest-index maximizer.
pub fn argmax_action(dist: &ActionDistribution) -> usize {
    argmax_of(dist.probs())
}

pub(crate) fn argmax_of(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Team entropy bonus `(c_H / N) Σ_i H(π_i)`.
pub fn entropy(dists: &[ActionDistribution], coefficient: f64) -> f64 {
    if dists.is_empty() {
        return 0.0;
    }
    coefficient / dists.len() as f64 * dists.iter().map(ActionDistribution::entropy).sum::<f64>()
}

/// Dense layer, weights stored row-major as `inputs × outputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn uniform(inputs: usize, outputs: usize, range: f64, rng: &mut LabRng) -> Self {
        let mut layer = Self::zeros(inputs, outputs);
        for w in &mut layer.weights {
            *w = rng.gen_range(-range..range);
        }
        layer
    }

    pub fn len(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.weights[i * self.outputs..(i + 1) * self.outputs]
    }

    fn same_shape(&self, other: &Layer) -> bool {
        self.inputs == other.inputs && self.outputs == other.outputs
    }
}

/// Parameters of the team policy.
///
/// `heads` holds a single shared head, or one head per agent after
/// [`clone_head_per_agent`]; in the latter case `frozen_body` is set.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub n_levels: usize,
    pub n_agents: usize,
    pub n_actions: usize,
    pub body: Layer,
    pub heads: Vec<Layer>,
    pub frozen_body: bool,
}

impl PolicyParams {
    /// Uniform(−0.05, 0.05) weights and zero biases.
    pub fn init(n_levels: usize, n_agents: usize, n_actions: usize, hidden: usize, rng: &mut LabRng) -> Self {
        let body = Layer::uniform(n_levels + n_agents, hidden, INIT_RANGE, rng);
        let head = Layer::uniform(hidden, n_actions, INIT_RANGE, rng);
        Self {
            n_levels,
            n_agents,
            n_actions,
            body,
            heads: vec![head],
            frozen_body: false,
        }
    }

    pub fn zeros(n_levels: usize, n_agents: usize, n_actions: usize, hidden: usize) -> Self {
        Self {
            n_levels,
            n_agents,
            n_actions,
            body: Layer::zeros(n_levels + n_agents, hidden),
            heads: vec![Layer::zeros(hidden, n_actions)],
            frozen_body: false,
        }
    }

    /// Zero-valued parameters (and gradients) with the same shape.
    pub fn zeros_like(&self) -> Self {
        Self {
            body: Layer::zeros(self.body.inputs, self.body.outputs),
            heads: self.heads.iter().map(|h| Layer::zeros(h.inputs, h.outputs)).collect(),
            ..self.clone()
        }
    }

    pub fn hidden(&self) -> usize {
        self.body.outputs
    }

    pub fn input_dim(&self) -> usize {
        self.n_levels + self.n_agents
    }

    pub fn has_per_agent_heads(&self) -> bool {
        self.heads.len() > 1
    }

    pub fn body_len(&self) -> usize {
        self.body.len()
    }

    pub fn len(&self) -> usize {
        self.body.len() + self.heads.iter().map(Layer::len).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat view in the order body weights, body bias, then each head's
    /// weights and bias.
    pub fn values(&self) -> impl Iterator<Item = &f64> + '_ {
        self.body
            .weights
            .iter()
            .chain(self.body.bias.iter())
            .chain(self.heads.iter().flat_map(|h| h.weights.iter().chain(h.bias.iter())))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.body
            .weights
            .iter_mut()
            .chain(self.body.bias.iter_mut())
            .chain(
                self.heads
                    .iter_mut()
                    .flat_map(|h| h.weights.iter_mut().chain(h.bias.iter_mut())),
            )
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.values().copied().collect()
    }

    pub fn body_values(&self) -> impl Iterator<Item = &f64> + '_ {
        self.body.weights.iter().chain(self.body.bias.iter())
    }

    pub fn same_shape(&self, other: &PolicyParams) -> bool {
        self.n_levels == other.n_levels
            && self.n_agents == other.n_agents
            && self.n_actions == other.n_actions
            && self.body.same_shape(&other.body)
            && self.heads.len() == other.heads.len()
            && self.heads.iter().zip(&other.heads).all(|(a, b)| a.same_shape(b))
    }

    /// Structural consistency check, used after deserialization.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::DimensionMismatch(m.into()));
        if self.body.inputs != self.input_dim()
            || self.body.weights.len() != self.body.inputs * self.body.outputs
            || self.body.bias.len() != self.body.outputs
        {
            return bad("body layer shape");
        }
        if self.heads.len() != 1 && self.heads.len() != self.n_agents {
            return bad("head count must be 1 or n_agents");
        }
        if self.has_per_agent_heads() && !self.frozen_body {
            return bad("per-agent heads require a frozen body");
        }
        for h in &self.heads {
            if h.inputs != self.hidden()
                || h.outputs != self.n_actions
                || h.weights.len() != h.inputs * h.outputs
                || h.bias.len() != h.outputs
            {
                return bad("head layer shape");
            }
        }
        Ok(())
    }

    pub fn head_for(&self, agent_id: usize) -> &Layer {
        if self.has_per_agent_heads() {
            &self.heads[agent_id]
        } else {
            &self.heads[0]
        }
    }

    fn check_obs(&self, obs: Observation) -> Result<()> {
        if obs.level_index >= self.n_levels || obs.agent_id >= self.n_agents {
            return Err(Error::DimensionMismatch(format!(
                "observation ({}, {}) outside policy built for {} levels x {} agents",
                obs.level_index, obs.agent_id, self.n_levels, self.n_agents
            )));
        }
        Ok(())
    }

    fn hidden_into(&self, obs: Observation, out: &mut [f64]) {
        let level_row = self.body.row(obs.level_index);
        let agent_row = self.body.row(self.n_levels + obs.agent_id);
        for (j, h) in out.iter_mut().enumerate() {
            *h = math::tanh(level_row[j] + agent_row[j] + self.body.bias[j]);
        }
    }

    fn logits_into(&self, agent_id: usize, hidden: &[f64], out: &mut [f64]) {
        let head = self.head_for(agent_id);
        out.copy_from_slice(&head.bias);
        for (j, &h) in hidden.iter().enumerate() {
            for (o, &w) in out.iter_mut().zip(head.row(j)) {
                *o += h * w;
            }
        }
    }

    pub fn logits(&self, obs: Observation) -> Result<Vec<f64>> {
        self.check_obs(obs)?;
        let mut hidden = vec![0.0; self.hidden()];
        self.hidden_into(obs, &mut hidden);
        let mut logits = vec![0.0; self.n_actions];
        self.logits_into(obs.agent_id, &hidden, &mut logits);
        Ok(logits)
    }

    /// Action distribution of one agent at one level.
    pub fn forward(&self, obs: Observation) -> Result<ActionDistribution> {
        Ok(ActionDistribution::softmax(&self.logits(obs)?))
    }

    /// Evaluates every `(level, agent)` pair once. The FME observation space
    /// is this small, so rollouts and updates work from the table.
    pub fn forward_all(&self) -> PolicyTable {
        let (l, n, k, hd) = (self.n_levels, self.n_agents, self.n_actions, self.hidden());
        let mut table = PolicyTable {
            n_levels: l,
            n_agents: n,
            n_actions: k,
            hidden_dim: hd,
            probs: vec![0.0; l * n * k],
            hidden: vec![0.0; l * n * hd],
        };
        let mut logits = vec![0.0; k];
        for level_index in 0..l {
            for agent_id in 0..n {
                let o = level_index * n + agent_id;
                let obs = Observation { level_index, agent_id };
                let hidden = &mut table.hidden[o * hd..(o + 1) * hd];
                self.hidden_into(obs, hidden);
                self.logits_into(agent_id, hidden, &mut logits);
                softmax_into(&logits, &mut table.probs[o * k..(o + 1) * k]);
            }
        }
        table
    }

    /// Backpropagates per-observation logit gradients (`table` layout) into a
    /// parameter-shaped gradient. The body block stays zero when frozen.
    pub fn backprop(&self, table: &PolicyTable, dlogits: &[f64]) -> PolicyParams {
        let (n, k, hd) = (self.n_agents, self.n_actions, self.hidden());
        let mut grad = self.zeros_like();
        let mut dpre = vec![0.0; hd];
        for level_index in 0..self.n_levels {
            for agent_id in 0..n {
                let o = level_index * n + agent_id;
                let dl = &dlogits[o * k..(o + 1) * k];
                if dl.iter().all(|&g| g == 0.0) {
                    continue;
                }
                let h = &table.hidden[o * hd..(o + 1) * hd];
                let head_idx = if self.has_per_agent_heads() { agent_id } else { 0 };
                let head = &self.heads[head_idx];
                let ghead = &mut grad.heads[head_idx];
                for (gb, &d) in ghead.bias.iter_mut().zip(dl) {
                    *gb += d;
                }
                for j in 0..hd {
                    let row = &mut ghead.weights[j * k..(j + 1) * k];
                    let mut back = 0.0;
                    for a in 0..k {
                        row[a] += h[j] * dl[a];
                        back += head.weights[j * k + a] * dl[a];
                    }
                    dpre[j] = back * (1.0 - h[j] * h[j]);
                }
                if self.frozen_body {
                    continue;
                }
                for (j, &d) in dpre.iter().enumerate() {
                    grad.body.weights[level_index * hd + j] += d;
                    grad.body.weights[(self.n_levels + agent_id) * hd + j] += d;
                    grad.body.bias[j] += d;
                }
            }
        }
        grad
    }
}

/// Duplicates the shared head into one copy per agent and freezes the body.
pub fn clone_head_per_agent(params: &PolicyParams) -> Result<PolicyParams> {
    if params.has_per_agent_heads() {
        return Err(Error::AlreadyCloned);
    }
    let mut cloned = params.clone();
    cloned.heads = vec![params.heads[0].clone(); params.n_agents];
    cloned.frozen_body = true;
    Ok(cloned)
}

/// All `(level, agent)` distributions plus the hidden activations needed for
/// backpropagation. Observation `o = level * n_agents + agent`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTable {
    pub n_levels: usize,
    pub n_agents: usize,
    pub n_actions: usize,
    hidden_dim: usize,
    probs: Vec<f64>,
    hidden: Vec<f64>,
}

impl PolicyTable {
    pub fn obs_index(&self, level_index: usize, agent_id: usize) -> usize {
        level_index * self.n_agents + agent_id
    }

    pub fn probs(&self, level_index: usize, agent_id: usize) -> &[f64] {
        let o = self.obs_index(level_index, agent_id);
        &self.probs[o * self.n_actions..(o + 1) * self.n_actions]
    }

    pub fn probs_by_obs(&self, o: usize) -> &[f64] {
        &self.probs[o * self.n_actions..(o + 1) * self.n_actions]
    }

    pub fn distribution(&self, level_index: usize, agent_id: usize) -> ActionDistribution {
        ActionDistribution::from_vec_unchecked(self.probs(level_index, agent_id).to_vec())
    }

    /// Distributions of every agent at one level.
    pub fn level_distributions(&self, level_index: usize) -> Vec<ActionDistribution> {
        (0..self.n_agents)
            .map(|i| self.distribution(level_index, i))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn obs(level_index: usize, agent_id: usize) -> Observation {
        Observation { level_index, agent_id }
    }

    #[test]
    fn zero_head_gives_uniform() {
        let mut p = PolicyParams::init(3, 2, 10, 8, &mut rng::seeded(0));
        p.heads[0] = Layer::zeros(8, 10);
        let d = p.forward(obs(1, 1)).unwrap();
        for &q in d.probs() {
            assert!((q - 0.1).abs() < 1e-15);
        }
    }

    #[test]
    fn agents_differ_only_through_identity_bits() {
        let mut p = PolicyParams::init(2, 2, 4, 8, &mut rng::seeded(1));
        let a = p.forward(obs(0, 0)).unwrap();
        let b = p.forward(obs(0, 1)).unwrap();
        assert_ne!(a, b);
        // make both agent rows identical: outputs coincide
        let hd = p.hidden();
        let row: Vec<f64> = p.body.row(2).to_vec();
        p.body.weights[3 * hd..4 * hd].copy_from_slice(&row);
        assert_eq!(p.forward(obs(0, 0)).unwrap(), p.forward(obs(0, 1)).unwrap());
    }

    #[test]
    fn forward_rejects_out_of_range() {
        let p = PolicyParams::init(3, 2, 5, 8, &mut rng::seeded(0));
        assert!(p.forward(obs(3, 0)).is_err());
        assert!(p.forward(obs(0, 2)).is_err());
    }

    #[test]
    fn forward_all_matches_forward() {
        let p = PolicyParams::init(4, 3, 6, 8, &mut rng::seeded(5));
        let t = p.forward_all();
        for l in 0..4 {
            for i in 0..3 {
                assert_eq!(t.probs(l, i), p.forward(obs(l, i)).unwrap().probs());
            }
        }
    }

    #[test]
    fn entropy_cases() {
        let ln10 = 10f64.ln();
        assert!((entropy(&[ActionDistribution::uniform(10)], 1.0) - ln10).abs() < 1e-12);
        assert_eq!(entropy(&[ActionDistribution::deterministic(3, 10)], 1.0), 0.0);
        let mixed = [ActionDistribution::uniform(2), ActionDistribution::deterministic(0, 2)];
        assert!((entropy(&mixed, 1.0) - 0.346_573_590_279_972_6).abs() < 1e-12);
    }

    #[test]
    fn argmax_ties_break_low() {
        let d = |v: &[f64]| ActionDistribution::new(v.to_vec()).unwrap();
        assert_eq!(argmax_action(&d(&[0.1, 0.7, 0.2])), 1);
        assert_eq!(argmax_action(&d(&[0.5, 0.5])), 0);
        assert_eq!(argmax_action(&ActionDistribution::uniform(10)), 0);
    }

    #[test]
    fn distribution_validation() {
        assert!(ActionDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(ActionDistribution::new(vec![-0.1, 1.1]).is_err());
        assert!(ActionDistribution::new(vec![]).is_err());
        assert!(ActionDistribution::new(vec![0.25; 4]).is_ok());
    }

    #[test]
    fn cloning_preserves_outputs_and_isolates_heads() {
        let p = PolicyParams::init(3, 4, 5, 8, &mut rng::seeded(9));
        let mut c = clone_head_per_agent(&p).unwrap();
        assert!(c.frozen_body);
        assert_eq!(c.heads.len(), 4);
        assert_eq!(p.forward_all(), c.forward_all());
        assert_eq!(clone_head_per_agent(&c), Err(Error::AlreadyCloned));
        c.heads[1].bias[2] += 1.0;
        for l in 0..3 {
            for i in [0, 2, 3] {
                assert_eq!(c.forward(obs(l, i)).unwrap(), p.forward(obs(l, i)).unwrap());
            }
            assert_ne!(c.forward(obs(l, 1)).unwrap(), p.forward(obs(l, 1)).unwrap());
        }
        c.validate().unwrap();
    }

    #[test]
    fn flat_views_cover_every_parameter() {
        let mut p = PolicyParams::init(3, 2, 4, 8, &mut rng::seeded(2));
        assert_eq!(p.values().count(), p.len());
        assert_eq!(p.len(), 5 * 8 + 8 + 8 * 4 + 4);
        for (i, v) in p.values_mut().enumerate() {
            *v = i as f64;
        }
        assert_eq!(p.to_flat()[p.body_len()], p.heads[0].weights[0]);
    }
}
