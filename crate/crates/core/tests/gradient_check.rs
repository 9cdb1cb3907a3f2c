//! Analytic surrogate gradients against central finite differences.

use rand::Rng;
use resonance_core::policy::{
    clone_head_per_agent, policy_gradient, surrogate_objective, EpisodeBatch, PolicyParams, RatioReference,
    SurrogateConfig,
};
use resonance_core::rng::{self, LabRng};

const H: f64 = 1e-5;

/// Batch collected from `collector`, with behavior probabilities that are
/// either the raw ones or a deliberately perturbed distribution.
fn micro_batch(collector: &PolicyParams, episodes: usize, rng: &mut LabRng, resonated_share: f64) -> EpisodeBatch {
    let table = collector.forward_all();
    let (l, n, k) = (collector.n_levels, collector.n_agents, collector.n_actions);
    let mut batch = EpisodeBatch::new(l, n, k);
    for _ in 0..episodes {
        for level in 0..l {
            let resonated = rng.gen::<f64>() < resonated_share;
            let mut actions = Vec::with_capacity(n);
            let mut behavior = Vec::with_capacity(n);
            let mut raw = Vec::with_capacity(n);
            for agent in 0..n {
                let probs = table.probs(level, agent);
                let a = rng.gen_range(0..k);
                actions.push(a);
                raw.push(probs[a]);
                behavior.push(if resonated { 1.0 } else { rng.gen_range(0.05..1.0) });
            }
            batch.push_step(&actions, &behavior, &raw, rng.gen_range(-1.0..1.0), resonated).unwrap();
        }
    }
    batch
}

fn max_relative_error(params: &PolicyParams, batch: &EpisodeBatch, cfg: &SurrogateConfig) -> f64 {
    let (grad, stats) = policy_gradient(params, batch, cfg).unwrap();
    let reference = surrogate_objective(params, batch, cfg).unwrap();
    assert!((reference - stats.loss).abs() < 1e-10, "loss paths disagree: {reference} vs {}", stats.loss);

    let analytic: Vec<f64> = grad.values().copied().collect();
    let mut worst: f64 = 0.0;
    for idx in 0..params.len() {
        if params.frozen_body && idx < params.body_len() {
            assert_eq!(analytic[idx], 0.0);
            continue;
        }
        let mut plus = params.clone();
        *plus.values_mut().nth(idx).unwrap() += H;
        let mut minus = params.clone();
        *minus.values_mut().nth(idx).unwrap() -= H;
        let numeric =
            (surrogate_objective(&plus, batch, cfg).unwrap() - surrogate_objective(&minus, batch, cfg).unwrap()) / (2.0 * H);
        let scale = analytic[idx].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((analytic[idx] - numeric).abs() / scale);
    }
    worst
}

/// Moves the parameters away from the collector so ratios spread across
/// the clipped and unclipped branches.
fn drift(params: &PolicyParams, rng: &mut LabRng, size: f64) -> PolicyParams {
    let mut p = params.clone();
    for v in p.values_mut() {
        *v += rng.gen_range(-size..size);
    }
    p
}

#[test]
fn shared_policy_matches_finite_differences() {
    for seed in 0..5u64 {
        let mut rng = rng::seeded(seed);
        let (l, n, k) = (rng.gen_range(1..4), rng.gen_range(2..4), rng.gen_range(2..5));
        let collector = PolicyParams::init(l, n, k, 4, &mut rng);
        let batch = micro_batch(&collector, 6, &mut rng, 0.0);
        let params = drift(&collector, &mut rng, 0.8);
        for reference in [RatioReference::Behavior, RatioReference::Raw] {
            let cfg = SurrogateConfig {
                entropy_coef: 0.05,
                ratio_reference: reference,
                ..Default::default()
            };
            let err = max_relative_error(&params, &batch, &cfg);
            assert!(err <= 1e-4, "seed {seed} {reference:?}: max relative error {err}");
        }
    }
}

#[test]
fn two_agent_single_level_toy() {
    let mut rng = rng::seeded(11);
    let collector = PolicyParams::init(1, 2, 3, 8, &mut rng);
    let batch = micro_batch(&collector, 10, &mut rng, 0.0);
    let params = drift(&collector, &mut rng, 0.3);
    let err = max_relative_error(&params, &batch, &SurrogateConfig::default());
    assert!(err <= 1e-4, "max relative error {err}");
}

#[test]
fn per_agent_heads_and_resonated_steps() {
    for seed in 0..5u64 {
        let mut rng = rng::seeded(100 + seed);
        let shared = PolicyParams::init(2, 3, 4, 5, &mut rng);
        let cloned = clone_head_per_agent(&shared).unwrap();
        let batch = micro_batch(&cloned, 5, &mut rng, 0.4);
        let params = drift(&cloned, &mut rng, 0.5);
        for include_resonated in [true, false] {
            let cfg = SurrogateConfig {
                include_resonated,
                ratio_reference: RatioReference::Behavior,
                ..Default::default()
            };
            let err = max_relative_error(&params, &batch, &cfg);
            assert!(err <= 1e-4, "seed {seed}: max relative error {err}");
        }
    }
}
