//! Sampling frequencies against brute-force prioritized distributions.

use fedweigh::replay::{ere_window, BufferConfig, ReplayBuffer, Transition};
use fedweigh::seed;
use fedweigh::SimplexAction;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn buffer(priorities: &[f64], nu: f64) -> ReplayBuffer {
    let cfg = BufferConfig {
        capacity: priorities.len(),
        c_min: 1,
        nu,
        ..Default::default()
    };
    let mut b = ReplayBuffer::new(cfg).unwrap();
    for (i, &p) in priorities.iter().enumerate() {
        let id = b.push(Transition {
            state: vec![i as f64],
            action: SimplexAction::uniform(1),
            reward: 0.0,
            next_state: vec![0.0],
            done: false,
        });
        b.update_priorities(&[id], &[p]);
    }
    b
}

fn frequencies(b: &ReplayBuffer, window: usize, draws: usize, s: u64) -> Vec<u64> {
    let mut rng = seed::stream(s, "replay-test", &[]);
    let mut counts = vec![0u64; b.len()];
    let per = b.len();
    for _ in 0..draws.div_ceil(per) {
        let sample = b.sample_window(per, window, &mut rng).unwrap();
        for t in sample.transitions {
            counts[t.state[0] as usize] += 1;
        }
    }
    counts
}

fn chi_square_p(counts: &[u64], probs: &[f64]) -> f64 {
    let n: u64 = counts.iter().sum();
    let stat: f64 = counts
        .iter()
        .zip(probs)
        .map(|(&c, &p)| {
            let e = p * n as f64;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    1.0 - ChiSquared::new((counts.len() - 1) as f64)
        .unwrap()
        .cdf(stat)
}

#[test]
fn eight_item_chi_square() {
    let pr = [1.0, 1.0, 2.0, 4.0, 1.0, 2.0, 1.0, 8.0];
    let b = buffer(&pr, 1.0);
    let total: f64 = pr.iter().sum();
    let expect: Vec<f64> = pr.iter().map(|p| p / total).collect();
    let counts = frequencies(&b, 8, 100_000, 3);
    assert_eq!(counts.iter().sum::<u64>(), 100_000);
    let p = chi_square_p(&counts, &expect);
    assert!(p > 0.01, "p = {p}, counts {counts:?}");
}

#[test]
fn four_item_frequencies() {
    let b = buffer(&[1.0, 1.0, 2.0, 4.0], 1.0);
    let counts = frequencies(&b, 4, 100_000, 5);
    for (c, e) in counts.iter().zip([0.125, 0.125, 0.25, 0.5]) {
        let f = *c as f64 / 100_000.0;
        assert!((f - e).abs() < 0.005, "{f} vs {e}");
    }
}

#[test]
fn equal_priorities_sample_uniformly() {
    let b = buffer(&[3.0; 10], 0.6);
    let counts = frequencies(&b, 10, 100_000, 7);
    let sigma = (100_000.0f64 * 0.1 * 0.9).sqrt();
    for c in counts {
        assert!((c as f64 - 10_000.0).abs() < 3.0 * sigma, "{c}");
    }
}

#[test]
fn importance_weights_match_formula() {
    let pr = [1.0, 3.0];
    let b = buffer(&pr, 0.5);
    let mut rng = seed::stream(1, "w", &[]);
    let samples: Vec<_> = (0..100)
        .map(|_| b.sample_window(2, 2, &mut rng).unwrap())
        .collect();
    // P = p^0.5 / Σ; w ∝ (1/(2P))^0.5, normalized by the batch max.
    let probs: Vec<f64> = {
        let w: Vec<f64> = pr.iter().map(|p: &f64| p.sqrt()).collect();
        let t: f64 = w.iter().sum();
        w.iter().map(|x| x / t).collect()
    };
    let raw: Vec<f64> = probs.iter().map(|p| (1.0 / (2.0 * p)).sqrt()).collect();
    let max = raw[0].max(raw[1]);
    for s in samples {
        let batch_max = s
            .transitions
            .iter()
            .map(|t| raw[t.state[0] as usize])
            .fold(0.0, f64::max);
        for (t, w) in s.transitions.iter().zip(&s.is_weights) {
            let i = t.state[0] as usize;
            assert!((w - raw[i] / batch_max).abs() < 1e-12);
            assert!(*w > 0.0 && *w <= 1.0);
        }
        assert!(batch_max <= max);
    }
}

#[test]
fn window_monotone_and_floored() {
    for &(cap, eta, c_min) in &[
        (10_000usize, 0.996, 500usize),
        (1000, 0.9, 10),
        (50, 0.999, 50),
    ] {
        let cfg = BufferConfig {
            capacity: cap,
            eta,
            c_min,
            ..Default::default()
        };
        let mut prev = usize::MAX;
        for t in 1..=1000 {
            let c = ere_window(&cfg, t, 1000, cap);
            assert!(c <= prev);
            assert!(c >= c_min);
            prev = c;
        }
        let flat = BufferConfig { eta: 1.0, ..cfg };
        for t in 1..=1000 {
            assert_eq!(ere_window(&flat, t, 1000, cap), cap);
        }
    }
}
