//! The three sub-rewards and their weighted sum.

use serde::{Deserialize, Serialize};

use crate::nn::FlatParams;
use crate::qeen::cosine;
use crate::simplex::SimplexAction;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    pub kappa: f64,
    /// Target accuracy Δ.
    pub target_accuracy: f64,
    pub beta: [f64; 3],
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            kappa: 64.0,
            target_accuracy: 0.95,
            beta: [0.5, 0.4, 0.1],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardParts {
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub total: f64,
}

/// Accuracy reward. Below 50% accuracy it compares against the FedAvg
/// shadow `shadow`; above, against the target. Clamped to `(−1, 0]`.
pub fn reward_r1(acc: f64, shadow: f64, target: f64, kappa: f64) -> f64 {
    let gap = if acc < 0.5 {
        acc - shadow
    } else {
        acc - target
    };
    (kappa.powf(gap) - 1.0).min(0.0)
}

/// Quality-derived target weights `q̄ᵢ ∝ 1 − n̄ᵢ`; uniform when every model
/// has `n̄ = 1`.
pub fn quality_targets(normalized_marks: &[f64]) -> Vec<f64> {
    let k = normalized_marks.len();
    let q: Vec<f64> = normalized_marks
        .iter()
        .map(|n| (1.0 - n).clamp(0.0, 1.0))
        .collect();
    let s: f64 = q.iter().sum();
    if s <= 0.0 {
        return vec![1.0 / k as f64; k];
    }
    q.into_iter().map(|v| v / s).collect()
}

/// `−(1/K)·Σ(q̄ᵢ − aᵢ)²` with `q̄` from [`quality_targets`].
pub fn reward_r2(normalized_marks: &[f64], action: &SimplexAction) -> f64 {
    let q = quality_targets(normalized_marks);
    let k = q.len() as f64;
    -q.iter()
        .zip(action.weights())
        .map(|(t, a)| (t - a) * (t - a))
        .sum::<f64>()
        / k
}

/// `½·cos(w_prev, w_next) − ½`; −½ when either vector is zero.
pub fn reward_r3(prev: &FlatParams, next: &FlatParams) -> f64 {
    match cosine(prev.values(), next.values()) {
        Some(c) => 0.5 * c - 0.5,
        None => {
            log::warn!("cosine reward undefined for a zero parameter vector");
            -0.5
        }
    }
}

pub fn compound_reward(r1: f64, r2: f64, r3: f64, beta: [f64; 3]) -> RewardParts {
    RewardParts {
        r1,
        r2,
        r3,
        total: beta[0] * r1 + beta[1] * r2 + beta[2] * r3,
    }
}

/// `Σ_t γ^(t−1)·r_t`.
pub fn discounted_return(rewards: &[f64], gamma: f64) -> f64 {
    rewards.iter().rev().fold(0.0, |acc, r| r + gamma * acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, LayerSpec};

    fn fp(v: &[f64]) -> FlatParams {
        FlatParams::new(
            vec![LayerSpec::new(1, v.len() / 2, Activation::Identity)],
            v.to_vec(),
        )
        .unwrap()
    }

    #[test]
    fn r1_cases() {
        assert_eq!(reward_r1(0.95, 0.2, 0.95, 64.0), 0.0);
        assert!((reward_r1(0.9, 0.1, 1.0, 64.0) - (64f64.powf(-0.1) - 1.0)).abs() < 1e-12);
        // 64^-0.1 - 1 = -0.340246...
        assert!((reward_r1(0.9, 0.1, 1.0, 64.0) + 0.340246).abs() < 1e-6);
        assert_eq!(reward_r1(0.4, 0.4, 0.95, 64.0), 0.0);
        // Above the shadow in the low branch would be positive without the clamp.
        assert_eq!(reward_r1(0.45, 0.1, 0.95, 64.0), 0.0);
        assert!(reward_r1(0.0, 1.0, 1.0, 64.0) > -1.0);
    }

    #[test]
    fn r2_cases() {
        let a = SimplexAction::new(vec![0.0, 1.0]).unwrap();
        assert_eq!(reward_r2(&[0.0, 1.0], &a), -1.0);
        let q = quality_targets(&[0.2, 0.6, 1.0]);
        assert_eq!(
            reward_r2(&[0.2, 0.6, 1.0], &SimplexAction::new(q).unwrap()),
            0.0
        );
        assert_eq!(quality_targets(&[0.3, 0.3]), vec![0.5, 0.5]);
        assert_eq!(quality_targets(&[1.0, 1.0]), vec![0.5, 0.5]);
    }

    #[test]
    fn r2_argmax_on_grid() {
        let marks = [0.0, 1.0, 1.0];
        let steps = 20;
        let mut scored = Vec::new();
        for i in 0..=steps {
            for j in 0..=steps - i {
                let w = vec![
                    i as f64 / 20.0,
                    j as f64 / 20.0,
                    (steps - i - j) as f64 / 20.0,
                ];
                scored.push((
                    reward_r2(&marks, &SimplexAction::new(w.clone()).unwrap()),
                    w,
                ));
            }
        }
        let top = scored.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
        let best: Vec<_> = scored.iter().filter(|s| s.0 == top).collect();
        assert_eq!(best.len(), 1);
        let best = best[0];
        assert_eq!(best.1, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn r3_cases() {
        let w = fp(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(reward_r3(&w, &w), 0.0);
        assert_eq!(reward_r3(&w, &fp(&[-1.0, -2.0, -3.0, -4.0])), -1.0);
        assert_eq!(reward_r3(&fp(&[1.0, 0.0]), &fp(&[0.0, 1.0])), -0.5);
        assert_eq!(reward_r3(&fp(&[0.0, 0.0]), &fp(&[0.0, 1.0])), -0.5);
    }

    #[test]
    fn compound_cases() {
        assert_eq!(compound_reward(0.0, 0.0, 0.0, [0.5, 0.4, 0.1]).total, 0.0);
        assert!((compound_reward(-1.0, -1.0, -1.0, [0.5, 0.4, 0.1]).total + 1.0).abs() < 1e-12);
        assert_eq!(
            compound_reward(-0.3, -0.9, -0.7, [1.0, 0.0, 0.0]).total,
            -0.3
        );
    }

    #[test]
    fn discounting() {
        assert_eq!(discounted_return(&[-1.0, -1.0], 0.0), -1.0);
        assert!((discounted_return(&[-1.0, -1.0, -1.0], 0.5) + 1.75).abs() < 1e-12);
    }
}
