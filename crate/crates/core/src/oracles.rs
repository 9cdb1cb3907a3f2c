//! Closed-form results about diffusion of responsibility (DR) on Lv-C, and an
//! exhaustive expectation oracle for any level.
//!
//! For Lv-C with per-agent probabilities `π_jγ` of the capacity-limited
//! action:
//!
//! ```text
//! E[R_C]          = (Σ_j π_jγ − N · Π_j π_jγ) / (N − 1)
//! ∂E[R_C]/∂π_iγ   = 1/(N − 1) − N/(N − 1) · Π_{j≠i} π_jγ
//! ```
//!
//! The derivative turns negative only when the geometric mean of the other
//! agents' `π_jγ` exceeds `N^(−1/(N−1))`, a bound that approaches 1 as the
//! team grows.

use alloc::vec::Vec;

use crate::env::{reward_unchecked, LevelKind, LevelSpec};
use crate::error::{Error, Result};
use crate::math::{self, KahanSum};
use crate::policy::ActionDistribution;

/// Largest joint action space [`brute_force_expected_reward`] enumerates.
pub const BRUTE_FORCE_LIMIT: u128 = 10_000_000;

/// Per-agent probability of one distinguished action.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalProfile(Vec<f64>);

impl MarginalProfile {
    pub fn new(marginals: Vec<f64>) -> Result<Self> {
        if marginals.len() < 2 {
            return Err(Error::InvalidDimensions("a profile needs at least 2 agents".into()));
        }
        if marginals.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidConfig("marginals must lie in [0, 1]".into()));
        }
        Ok(Self(marginals))
    }

    /// Marginals of `action` under each agent's distribution.
    pub fn from_distributions(dists: &[ActionDistribution], action: usize) -> Result<Self> {
        Self::new(dists.iter().map(|d| d.prob(action)).collect())
    }

    pub fn uniform(n_agents: usize, p: f64) -> Result<Self> {
        Self::new(alloc::vec![p; n_agents])
    }

    pub fn n_agents(&self) -> usize {
        self.0.len()
    }

    pub fn marginals(&self) -> &[f64] {
        &self.0
    }

    fn product_except(&self, excluded: usize) -> f64 {
        self.0
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != excluded)
            .map(|(_, p)| p)
            .product()
    }

    fn sum_except(&self, excluded: usize) -> f64 {
        self.0
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != excluded)
            .map(|(_, p)| p)
            .sum()
    }
}

/// `(Σ_j π_jγ − N Π_j π_jγ) / (N − 1)`.
pub fn expected_lvc_reward(profile: &MarginalProfile) -> f64 {
    let n = profile.n_agents() as f64;
    let sum: f64 = profile.0.iter().sum();
    (sum - n * p_plt(profile)) / (n - 1.0)
}

/// `∂E[R_C]/∂π_iγ = 1/(N−1) − N/(N−1) Π_{j≠i} π_jγ`.
pub fn lvc_gradient(profile: &MarginalProfile, agent_index: usize) -> f64 {
    let n = profile.n_agents() as f64;
    (1.0 - n * profile.product_except(agent_index)) / (n - 1.0)
}

/// `N^(−1/(N−1))`, computed as `exp(−ln N / (N − 1))`.
pub fn dr_threshold_rhs(n_agents: usize) -> f64 {
    let n = n_agents as f64;
    math::exp(-math::ln(n) / (n - 1.0))
}

/// Probability that every agent picks the distinguished action.
pub fn p_plt(profile: &MarginalProfile) -> f64 {
    profile.0.iter().product()
}

/// Probability that ε-greedy agents all follow their greedy action:
/// `[(1 − ε) + ε / n_k]^N`.
pub fn p_penalty_value_based(epsilon: f64, n_actions: usize, n_agents: usize) -> f64 {
    math::powi((1.0 - epsilon) + epsilon / n_actions as f64, n_agents as i32)
}

/// Advantage of the distinguished action for agent `i` against the policy
/// baseline `b_{−i} = Σ_{j≠i} π_jγ`:
/// `−p_{−i} · b_{−i} + (1 − p_{−i}) / (N − 1)` with `p_{−i} = Π_{j≠i} π_jγ`.
pub fn advantage_main_action(profile: &MarginalProfile, agent_index: usize) -> f64 {
    let n = profile.n_agents() as f64;
    let p = profile.product_except(agent_index);
    let b = profile.sum_except(agent_index);
    -p * b + (1.0 - p) / (n - 1.0)
}

/// `π_i(u) − mean_j π_j(u)` for every agent.
pub fn preference_metric(dists: &[ActionDistribution], target_action: usize) -> Vec<f64> {
    if dists.is_empty() {
        return Vec::new();
    }
    let mean = dists.iter().map(|d| d.prob(target_action)).sum::<f64>() / dists.len() as f64;
    dists.iter().map(|d| d.prob(target_action) - mean).collect()
}

/// Geometric mean of the marginals of every agent except `excluded_agent`.
pub fn mean_log_marginal(profile: &MarginalProfile, excluded_agent: usize) -> Result<f64> {
    let mut log_sum = 0.0;
    for (j, &p) in profile.0.iter().enumerate() {
        if j == excluded_agent {
            continue;
        }
        if p <= 0.0 {
            return Err(Error::ZeroMarginal { agent: j });
        }
        log_sum += math::ln(p);
    }
    Ok(math::exp(log_sum / (profile.n_agents() as f64 - 1.0)))
}

/// Exact expected reward of one level by enumerating every joint action in
/// mixed-radix order (and, for Lv-B, every arm).
pub fn brute_force_expected_reward(level: &LevelSpec, dists: &[ActionDistribution]) -> Result<f64> {
    let n = dists.len();
    let min_agents = if level.kind == LevelKind::C { 2 } else { 1 };
    if n < min_agents {
        return Err(Error::InvalidDimensions(alloc::format!("need at least {min_agents} agents")));
    }
    let k = dists[0].n_actions();
    if dists.iter().any(|d| d.n_actions() != k) {
        return Err(Error::DimensionMismatch("agents disagree on the action count".into()));
    }
    if level.kind == LevelKind::B && level.arm_distribution.len() != k {
        return Err(Error::DimensionMismatch("arm distribution length".into()));
    }
    let joint_actions = (k as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if joint_actions > BRUTE_FORCE_LIMIT {
        return Err(Error::InstanceTooLarge {
            joint_actions,
            limit: BRUTE_FORCE_LIMIT,
        });
    }

    let arms: Vec<(usize, f64)> = match level.kind {
        LevelKind::B => level
            .arm_distribution
            .iter()
            .copied()
            .enumerate()
            .filter(|(_, p)| *p > 0.0)
            .collect(),
        _ => alloc::vec![(0, 1.0)],
    };

    // Odometer over joint actions; prefix[i] = Π_{j<i} π_j(u_j).
    let mut actions = alloc::vec![0usize; n];
    let mut prefix = alloc::vec![1.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] * dists[i].prob(0);
    }
    let mut total = KahanSum::default();
    loop {
        let weight = prefix[n];
        if weight != 0.0 {
            let mut reward = 0.0;
            for &(arm, p_arm) in &arms {
                reward += p_arm * reward_unchecked(level, &actions, arm);
            }
            total.add(weight * reward);
        }
        // increment the last digit, carrying leftwards
        let mut i = n;
        loop {
            if i == 0 {
                return Ok(total.value());
            }
            i -= 1;
            actions[i] += 1;
            if actions[i] < k {
                break;
            }
            actions[i] = 0;
        }
        for j in i..n {
            prefix[j + 1] = prefix[j] * dists[j].prob(actions[j]);
        }
    }
}

/// Closed-form expected reward of one level under independent agents.
pub fn expected_level_reward(level: &LevelSpec, dists: &[ActionDistribution]) -> f64 {
    let n = dists.len() as f64;
    match level.kind {
        LevelKind::A => dists.iter().map(|d| d.prob(level.target_action)).sum::<f64>() / n,
        LevelKind::B => {
            level
                .arm_distribution
                .iter()
                .enumerate()
                .map(|(arm, p)| p * dists.iter().map(|d| d.prob(arm)).sum::<f64>())
                .sum::<f64>()
                * level.reward_scale
                / n
        }
        LevelKind::C => {
            let profile = MarginalProfile(dists.iter().map(|d| d.prob(level.target_action)).collect());
            expected_lvc_reward(&profile)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn profile(v: &[f64]) -> MarginalProfile {
        MarginalProfile::new(v.to_vec()).unwrap()
    }

    /// Σ_k P[N_γ = k] · reward(k) by explicit binomial-style enumeration of
    /// the 2^N hit/miss patterns.
    fn pattern_sum(p: &[f64]) -> f64 {
        let n = p.len();
        let mut total = 0.0;
        for mask in 0u32..(1 << n) {
            let mut prob = 1.0;
            for (j, &pj) in p.iter().enumerate() {
                prob *= if mask >> j & 1 == 1 { pj } else { 1.0 - pj };
            }
            let k = mask.count_ones() as usize;
            let r = if k < n { k as f64 / (n as f64 - 1.0) } else { 0.0 };
            total += prob * r;
        }
        total
    }

    #[test]
    fn lvc_expectation_examples() {
        assert!((pattern_sum(&[0.5; 3]) - 0.5625).abs() < 1e-15);
        assert!((expected_lvc_reward(&profile(&[0.5; 3])) - 0.5625).abs() < 1e-15);
        assert_eq!(expected_lvc_reward(&profile(&[1.0; 4])), 0.0);
        assert_eq!(expected_lvc_reward(&profile(&[1.0, 1.0, 1.0, 0.0])), 1.0);
    }

    #[test]
    fn lvc_gradient_examples() {
        let p = profile(&[0.3, 0.5, 0.5]);
        assert!((lvc_gradient(&p, 0) - 0.125).abs() < 1e-15);
        let h = 1e-6;
        let fd = (expected_lvc_reward(&profile(&[0.3 + h, 0.5, 0.5]))
            - expected_lvc_reward(&profile(&[0.3 - h, 0.5, 0.5])))
            / (2.0 * h);
        assert!((fd - 0.125).abs() < 1e-8);
        assert!((lvc_gradient(&profile(&[0.2, 1.0, 1.0, 1.0]), 0) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn gradient_sign_flips_at_one_over_n() {
        // N = 3: Π_{j≠i} = 1/3 is the boundary
        let q = (1.0f64 / 3.0).sqrt();
        assert!(lvc_gradient(&profile(&[0.5, q + 1e-6, q + 1e-6]), 0) < 0.0);
        assert!(lvc_gradient(&profile(&[0.5, q - 1e-6, q - 1e-6]), 0) > 0.0);
    }

    #[test]
    fn threshold_values() {
        assert_eq!(dr_threshold_rhs(2), 0.5);
        assert!((dr_threshold_rhs(15) - 0.824).abs() < 5e-4);
        assert!((dr_threshold_rhs(50) - 0.923).abs() < 5e-4);
    }

    #[test]
    fn penalty_probabilities() {
        let p = p_plt(&MarginalProfile::uniform(15, 0.1).unwrap());
        assert!((p - 1e-15).abs() / 1e-15 < 1e-14);
        assert_eq!(p_plt(&profile(&[0.3, 0.0, 0.9])), 0.0);
        assert_eq!(p_plt(&profile(&[1.0; 5])), 1.0);
        assert!((p_penalty_value_based(0.1, 10, 10) - 0.389_416_118_118_107_6).abs() < 1e-12);
        assert_eq!(p_penalty_value_based(0.0, 10, 7), 1.0);
        let mut last = 1.0;
        for n in 2..30 {
            let v = p_penalty_value_based(0.1, 10, n);
            assert!(v < last);
            last = v;
        }
    }

    #[test]
    fn advantage_examples() {
        assert!((advantage_main_action(&profile(&[0.9, 0.5]), 0) - 0.25).abs() < 1e-15);
        assert!((advantage_main_action(&profile(&[0.9, 0.0, 0.0, 0.0]), 0) - 1.0 / 3.0).abs() < 1e-15);
        assert!((advantage_main_action(&profile(&[0.1, 1.0, 1.0, 1.0]), 0) + 3.0).abs() < 1e-15);
    }

    #[test]
    fn preference_examples() {
        let d = |p: f64| ActionDistribution::new(vec![p, 1.0 - p]).unwrap();
        let m = preference_metric(&[d(0.8), d(0.2)], 0);
        assert!((m[0] - 0.3).abs() < 1e-12 && (m[1] + 0.3).abs() < 1e-12);
        let flat = preference_metric(&[d(0.4), d(0.4), d(0.4)], 0);
        assert!(flat.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn geometric_mean_examples() {
        assert!((mean_log_marginal(&profile(&[0.9, 0.5, 0.5]), 0).unwrap() - 0.5).abs() < 1e-15);
        assert!((mean_log_marginal(&profile(&[0.0, 0.25, 1.0]), 0).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(
            mean_log_marginal(&profile(&[0.5, 0.0, 1.0]), 0),
            Err(Error::ZeroMarginal { agent: 1 })
        );
    }

    #[test]
    fn brute_force_small_cases() {
        let a = LevelSpec::static_action(3, 10).unwrap();
        let u = vec![ActionDistribution::uniform(10); 2];
        assert!((brute_force_expected_reward(&a, &u).unwrap() - 0.1).abs() < 1e-15);

        let b = LevelSpec::bandit([2, 0, 1], 4).unwrap();
        let greedy = vec![ActionDistribution::deterministic(2, 4); 3];
        assert!((brute_force_expected_reward(&b, &greedy).unwrap() - 1.0).abs() < 1e-15);

        let c = LevelSpec::responsibility(0, 2).unwrap();
        let half = vec![ActionDistribution::uniform(2); 3];
        assert!((brute_force_expected_reward(&c, &half).unwrap() - 0.5625).abs() < 1e-15);

        let big = vec![ActionDistribution::uniform(10); 8];
        assert!(matches!(
            brute_force_expected_reward(&c, &big),
            Err(Error::InstanceTooLarge { .. })
        ));
    }

    #[test]
    fn closed_form_matches_enumeration_for_every_kind() {
        let dists = vec![
            ActionDistribution::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap(),
            ActionDistribution::new(vec![0.4, 0.3, 0.2, 0.1]).unwrap(),
            ActionDistribution::new(vec![0.25, 0.25, 0.4, 0.1]).unwrap(),
        ];
        for level in [
            LevelSpec::static_action(2, 4).unwrap(),
            LevelSpec::bandit([3, 1, 0], 4).unwrap(),
            LevelSpec::responsibility(1, 4).unwrap(),
        ] {
            let a = brute_force_expected_reward(&level, &dists).unwrap();
            let b = expected_level_reward(&level, &dists);
            assert!((a - b).abs() < 1e-14, "{:?}", level.kind);
        }
    }
}
