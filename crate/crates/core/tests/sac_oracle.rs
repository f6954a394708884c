//! Actor gradient against finite differences, and policy-level properties.

use fedweigh::replay::Transition;
use fedweigh::sac::{entropy_estimate, Sac, SacConfig};
use fedweigh::seed;
use fedweigh::SimplexAction;
use rand::Rng as _;

fn agent(k: usize, state_dim: usize, s: u64) -> Sac {
    let cfg = SacConfig {
        hidden: vec![8, 8],
        ..Default::default()
    };
    Sac::new(state_dim, k, cfg, s).unwrap()
}

fn random_batch(sac: &Sac, n: usize, s: u64) -> Vec<Transition> {
    let mut rng = seed::stream(s, "batch", &[]);
    (0..n)
        .map(|_| {
            let state: Vec<f64> = (0..sac.state_dim)
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect();
            Transition {
                next_state: state.iter().map(|v| v * 0.5).collect(),
                action: sac.act(&state, false, &mut rng).unwrap().0,
                state,
                reward: rng.gen_range(-1.0..0.0),
                done: false,
            }
        })
        .collect()
}

fn check_actor_gradient(mut sac: Sac) {
    // Non-trivial policy: perturb the zero-initialized output layer.
    let mut rng = seed::stream(9, "perturb", &[]);
    for v in sac.actor.values_mut() {
        *v += rng.gen_range(-0.3..0.3);
    }
    let batch = random_batch(&sac, 6, 1);
    let loss_at = |s: &Sac| {
        s.actor_loss_and_grad(&batch, &mut seed::stream(4, "noise", &[]))
            .unwrap()
    };
    let (_, grad, _) = loss_at(&sac);
    let eps = 1e-6;
    let mut checked = 0;
    #[allow(clippy::needless_range_loop)]
    for i in 0..sac.actor.d() {
        let base = sac.actor.values()[i];
        sac.actor.values_mut()[i] = base + eps;
        let p = loss_at(&sac).0;
        sac.actor.values_mut()[i] = base - eps;
        let m = loss_at(&sac).0;
        sac.actor.values_mut()[i] = base;
        let numeric = (p - m) / (2.0 * eps);
        let denom = grad[i].abs().max(numeric.abs());
        if denom < 1e-7 {
            continue;
        }
        assert!(
            (grad[i] - numeric).abs() / denom < 1e-4,
            "param {i}: {} vs {numeric}",
            grad[i]
        );
        checked += 1;
    }
    assert!(checked > sac.actor.d() / 2);
}

#[test]
fn actor_gradient_matches_finite_differences() {
    check_actor_gradient(agent(3, 4, 2));
}

#[test]
fn actor_gradient_with_simplex_jacobian_matches_finite_differences() {
    let cfg = SacConfig {
        hidden: vec![8, 8],
        simplex_jacobian: true,
        init_alpha: 0.7,
        ..Default::default()
    };
    check_actor_gradient(Sac::new(4, 3, cfg, 2).unwrap());
}

#[test]
fn every_sampled_action_is_on_the_simplex() {
    let mut rng = seed::stream(3, "states", &[]);
    for s in 0..10u64 {
        let mut sac = agent(5, 7, s);
        for v in sac.actor.values_mut() {
            *v += rng.gen_range(-2.0..2.0);
        }
        for _ in 0..1000 {
            let state: Vec<f64> = (0..7).map(|_| rng.gen_range(-10.0..10.0)).collect();
            let (a, lp) = sac.act(&state, false, &mut rng).unwrap();
            assert!(SimplexAction::check(a.weights()).is_ok());
            assert!(lp.is_finite());
        }
    }
}

#[test]
fn large_temperature_widens_the_policy() {
    let cfg = SacConfig {
        hidden: vec![8, 8],
        init_alpha: 50.0,
        auto_alpha: false,
        actor_lr: 1e-2,
        ..Default::default()
    };
    let mut sac = Sac::new(4, 3, cfg, 5).unwrap();
    let batch = random_batch(&sac, 16, 2);
    let probe = batch[0].state.clone();
    let std_sum = |s: &Sac| {
        s.policy_params(&probe)
            .unwrap()
            .1
            .iter()
            .map(|l| l.exp())
            .sum::<f64>()
    };
    let before = std_sum(&sac);
    let mut rng = seed::stream(0, "upd", &[]);
    for _ in 0..20 {
        sac.actor_update(&batch, &mut rng).unwrap();
    }
    assert!(std_sum(&sac) > before, "{before} -> {}", std_sum(&sac));
}

#[test]
fn untrained_policy_entropy_is_positive() {
    let sac = agent(4, 6, 1);
    let h = entropy_estimate(&sac, &[0.3; 6], 2000, 1).unwrap();
    // Unit-variance Gaussian: K·½·ln(2πe) ≈ 5.68.
    assert!(h >= 0.0);
    assert!((h - 4.0 * 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln()).abs() < 0.1);
}

#[test]
fn update_runs_and_stays_finite() {
    let mut sac = agent(3, 4, 8);
    let batch = random_batch(&sac, 16, 3);
    let w = vec![1.0; 16];
    let mut rng = seed::stream(0, "u", &[]);
    for _ in 0..10 {
        let (stats, td) = sac.update(&batch, &w, &mut rng).unwrap();
        assert!(stats.critic_loss.is_finite() && stats.actor_loss.is_finite());
        assert_eq!(td.len(), 16);
        assert!(stats.alpha > 0.0);
    }
    assert_eq!(sac.updates, 10);
}
