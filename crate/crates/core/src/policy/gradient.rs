//! Clipped surrogate objective and its exact gradient.
//!
//! For a sample with advantage `A` and ratio `r = π(u) / π_ref(u)` the
//! surrogate is `min(r·A, clip(r, 1−ε, 1+ε)·A)`, floored at `dual_clip · A`
//! when `A < 0`. The loss is the negated mean surrogate minus
//! `entropy_coef` times the mean policy entropy over the same samples.

use alloc::vec;

use super::{ActionDistribution, PolicyParams};
use crate::error::{Error, Result};
use crate::math;
use crate::policy::EpisodeBatch;

/// Which recorded probability forms the denominator of the importance ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RatioReference {
    /// Probability under the distribution that actually produced the action
    /// (1 on resonated steps).
    Behavior,
    /// Raw policy probability at collection time, as if resonance were absent.
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateConfig {
    pub clip: f64,
    pub dual_clip: f64,
    pub entropy_coef: f64,
    pub ratio_reference: RatioReference,
    /// Whether resonated (greedy) steps enter the surrogate.
    pub include_resonated: bool,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            clip: 0.2,
            dual_clip: 3.0,
            entropy_coef: 0.05,
            ratio_reference: RatioReference::Behavior,
            include_resonated: true,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SurrogateStats {
    pub loss: f64,
    pub surrogate: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub mean_ratio: f64,
    pub n_samples: usize,
}

impl SurrogateConfig {
    fn reference(&self, behavior: f64, raw: f64) -> f64 {
        match self.ratio_reference {
            RatioReference::Behavior => behavior,
            RatioReference::Raw => raw,
        }
    }

    /// Surrogate value and whether the gradient flows through `r`.
    fn clipped(&self, ratio: f64, adv: f64) -> (f64, bool) {
        if adv > 0.0 {
            if ratio < 1.0 + self.clip {
                (ratio * adv, true)
            } else {
                ((1.0 + self.clip) * adv, false)
            }
        } else if adv < 0.0 {
            if ratio < 1.0 - self.clip {
                ((1.0 - self.clip) * adv, false)
            } else if ratio > self.dual_clip {
                (self.dual_clip * adv, false)
            } else {
                (ratio * adv, true)
            }
        } else {
            // zero advantage contributes nothing; NaN is kept so callers see it
            (ratio * adv, false)
        }
    }
}

/// Loss evaluated sample by sample through [`PolicyParams::forward`].
///
/// This is the slow reference path; [`policy_gradient`] aggregates per
/// observation instead.
pub fn surrogate_objective(params: &PolicyParams, batch: &EpisodeBatch, cfg: &SurrogateConfig) -> Result<f64> {
    let mut surrogate = math::KahanSum::default();
    let mut entropy = math::KahanSum::default();
    let mut count = 0usize;
    for s in batch.samples() {
        if s.resonated && !cfg.include_resonated {
            continue;
        }
        let dist: ActionDistribution = params.forward(s.observation)?;
        let ratio = dist.prob(s.action) / cfg.reference(s.behavior_prob, s.raw_prob);
        surrogate.add(cfg.clipped(ratio, s.advantage).0);
        entropy.add(dist.entropy());
        count += 1;
    }
    if count == 0 {
        return Err(Error::EmptyBatch);
    }
    let n = count as f64;
    Ok(-(surrogate.value() / n + cfg.entropy_coef * entropy.value() / n))
}

/// Gradient of the surrogate loss with respect to every parameter; the body
/// block is exactly zero when `params.frozen_body` is set.
pub fn policy_gradient(
    params: &PolicyParams,
    batch: &EpisodeBatch,
    cfg: &SurrogateConfig,
) -> Result<(PolicyParams, SurrogateStats)> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if batch.n_levels != params.n_levels || batch.n_agents != params.n_agents || batch.n_actions != params.n_actions {
        return Err(Error::DimensionMismatch("batch and policy dimensions differ".into()));
    }
    let table = params.forward_all();
    let (n, k) = (params.n_agents, params.n_actions);
    let n_obs = params.n_levels * n;

    // Per observation: Σ g·r for each chosen action, and the sample count.
    let mut action_coef = vec![0.0; n_obs * k];
    let mut counts = vec![0usize; n_obs];
    let mut surrogate = 0.0;
    let mut clipped = 0usize;
    let mut ratio_sum = 0.0;
    for step in 0..batch.n_steps() {
        if batch.resonated(step) && !cfg.include_resonated {
            continue;
        }
        let level = step % batch.n_levels;
        let adv = batch.advantages()[step];
        for agent in 0..n {
            let o = level * n + agent;
            let a = batch.action(step, agent);
            let p = table.probs_by_obs(o)[a];
            let ratio = p / cfg.reference(batch.behavior_prob(step, agent), batch.raw_prob(step, agent));
            let (value, flows) = cfg.clipped(ratio, adv);
            surrogate += value;
            ratio_sum += ratio;
            counts[o] += 1;
            if flows {
                action_coef[o * k + a] += adv * ratio;
            } else if adv != 0.0 {
                clipped += 1;
            }
        }
    }
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(Error::EmptyBatch);
    }
    let inv = 1.0 / total as f64;

    let mut entropy_sum = 0.0;
    let mut dlogits = vec![0.0; n_obs * k];
    for o in 0..n_obs {
        if counts[o] == 0 {
            continue;
        }
        let probs = table.probs_by_obs(o);
        let h = super::entropy_of(probs);
        entropy_sum += counts[o] as f64 * h;
        let coef = &action_coef[o * k..(o + 1) * k];
        let coef_total: f64 = coef.iter().sum();
        let ent_weight = cfg.entropy_coef * counts[o] as f64;
        for a in 0..k {
            let p = probs[a];
            // d(r·A)/dz_a = A·r·(1[a = u] − p_a)
            let d_surr = coef[a] - p * coef_total;
            // dH/dz_a = −p_a (ln p_a + H)
            let d_ent = if p > 0.0 { -p * (math::ln(p) + h) } else { 0.0 };
            // loss = −J
            dlogits[o * k + a] = -(d_surr + ent_weight * d_ent) * inv;
        }
    }
    let grad = params.backprop(&table, &dlogits);
    let surrogate = surrogate * inv;
    let entropy = entropy_sum * inv;
    Ok((
        grad,
        SurrogateStats {
            loss: -(surrogate + cfg.entropy_coef * entropy),
            surrogate,
            entropy,
            clip_fraction: clipped as f64 * inv,
            mean_ratio: ratio_sum * inv,
            n_samples: total,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::clone_head_per_agent;
    use crate::rng;
    use alloc::vec::Vec;
    use rand::Rng;

    fn random_batch(params: &PolicyParams, episodes: usize, seed: u64) -> EpisodeBatch {
        let mut rng = rng::seeded(seed);
        let table = params.forward_all();
        let mut b = EpisodeBatch::new(params.n_levels, params.n_agents, params.n_actions);
        for _ in 0..episodes {
            for l in 0..params.n_levels {
                let mut acts = Vec::new();
                let mut beh = Vec::new();
                let mut raw = Vec::new();
                for i in 0..params.n_agents {
                    let a = rng.gen_range(0..params.n_actions);
                    acts.push(a);
                    raw.push(table.probs(l, i)[a]);
                    beh.push(rng.gen_range(0.05..1.0));
                }
                b.push_step(&acts, &beh, &raw, rng.gen_range(-1.0..1.0), rng.gen_bool(0.3)).unwrap();
            }
        }
        b
    }

    #[test]
    fn zero_advantage_zero_entropy_gives_zero_gradient() {
        let params = PolicyParams::init(2, 2, 4, 8, &mut rng::seeded(1));
        let mut batch = random_batch(&params, 5, 2);
        let zeros = vec![0.0; batch.n_steps()];
        batch.set_advantages(zeros).unwrap();
        let cfg = SurrogateConfig {
            entropy_coef: 0.0,
            ..Default::default()
        };
        let (g, _) = policy_gradient(&params, &batch, &cfg).unwrap();
        assert!(g.values().all(|&v| v == 0.0));
    }

    #[test]
    fn frozen_body_gradient_is_exactly_zero() {
        let params = clone_head_per_agent(&PolicyParams::init(3, 3, 4, 8, &mut rng::seeded(3))).unwrap();
        let batch = random_batch(&params, 10, 4);
        let (g, _) = policy_gradient(&params, &batch, &SurrogateConfig::default()).unwrap();
        assert!(g.body_values().all(|&v| v == 0.0));
        assert!(g.values().any(|&v| v != 0.0));
    }

    #[test]
    fn loss_matches_reference_path() {
        let params = PolicyParams::init(3, 2, 5, 8, &mut rng::seeded(7));
        let batch = random_batch(&params, 20, 8);
        for reference in [RatioReference::Behavior, RatioReference::Raw] {
            for include_resonated in [true, false] {
                let cfg = SurrogateConfig {
                    ratio_reference: reference,
                    include_resonated,
                    ..Default::default()
                };
                let (_, stats) = policy_gradient(&params, &batch, &cfg).unwrap();
                let slow = surrogate_objective(&params, &batch, &cfg).unwrap();
                assert!((stats.loss - slow).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fresh_raw_ratios_are_one() {
        let params = PolicyParams::init(2, 2, 3, 8, &mut rng::seeded(11));
        let batch = random_batch(&params, 4, 12);
        let cfg = SurrogateConfig {
            ratio_reference: RatioReference::Raw,
            ..Default::default()
        };
        let (_, stats) = policy_gradient(&params, &batch, &cfg).unwrap();
        assert!((stats.mean_ratio - 1.0).abs() < 1e-12);
    }
}
