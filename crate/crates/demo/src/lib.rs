//! Browser bindings for three small experiments: defect collapse of FedAvg
//! against the oracle weights, the accuracy reward `r1`, and prioritized
//! sampling inside the recent-experience window.
//!
//! Every entry point takes plain numbers and returns JSON, so the page needs
//! no generated TypeScript types.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use fedweigh::experiment::{defect_plan, load_data, DatasetSpec, ExperimentConfig, Strategy};
use fedweigh::fed::{FedAvg, Federation, RuleBased, WeightStrategy};
use fedweigh::replay::{ere_window, BufferConfig, ReplayBuffer, Transition};
use fedweigh::sac::reward_r1;
use fedweigh::{seed, Result, SimplexAction};

fn js_err(e: fedweigh::Error) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("plain data serializes")
}

#[derive(Debug, Serialize)]
pub struct Curves {
    pub fedavg: Vec<f64>,
    pub rule_based: Vec<f64>,
    /// Defective share of the K selected uploads, per round.
    pub defective_share: Vec<f64>,
}

/// Validation accuracy per round for FedAvg and the oracle on the same
/// synthetic federation and defect draw.
pub fn compare_curves(
    clients: usize,
    k: usize,
    m: usize,
    degree: f64,
    rounds: usize,
    seed: u64,
) -> Result<Curves> {
    let mut cfg = ExperimentConfig::with_defaults(
        DatasetSpec::Synthetic {
            num_classes: 6,
            per_class: 60,
            feature_dim: 12,
            noise_sigma: 0.3,
        },
        Strategy::Fedavg,
    );
    cfg.seed = seed;
    cfg.rounds = rounds;
    cfg.repeats = 1;
    cfg.federation.clients = clients;
    cfg.federation.k = k;
    cfg.federation.hidden = vec![16];
    cfg.federation.local.epochs = 2;
    cfg.federation.local.lr = 0.1;
    cfg.federation.local.batch_size = 16;
    cfg.defects.m = m;
    cfg.defects.degree = degree;
    cfg.validate()?;
    let data = load_data(&cfg)?;
    let plan = defect_plan(&cfg, 0)?;
    let curve = |strategy: &mut dyn WeightStrategy| -> Result<(Vec<f64>, Vec<f64>)> {
        let mut fed = Federation::new(data.clone(), k, cfg.federation.local, seed, 0)?;
        let mut acc = Vec::with_capacity(rounds);
        let mut share = Vec::with_capacity(rounds);
        for _ in 0..rounds {
            let r = fed.run_round(strategy, &plan)?;
            acc.push(r.global_accuracy);
            share.push(r.defect_flags.iter().filter(|d| **d).count() as f64 / k as f64);
        }
        Ok((acc, share))
    };
    let (fedavg, defective_share) = curve(&mut FedAvg)?;
    let (rule_based, _) = curve(&mut RuleBased)?;
    Ok(Curves {
        fedavg,
        rule_based,
        defective_share,
    })
}

#[wasm_bindgen]
pub fn compare(
    clients: usize,
    k: usize,
    m: usize,
    degree: f64,
    rounds: usize,
    seed: u32,
) -> std::result::Result<String, JsValue> {
    compare_curves(clients, k, m, degree, rounds, u64::from(seed))
        .map(|c| to_json(&c))
        .map_err(js_err)
}

/// `r1` over `points` evenly spaced accuracies in [0, 1].
#[wasm_bindgen]
pub fn r1_curve(shadow: f64, target: f64, kappa: f64, points: usize) -> Vec<f64> {
    let n = points.max(2);
    (0..n)
        .map(|i| reward_r1(i as f64 / (n - 1) as f64, shadow, target, kappa))
        .collect()
}

#[derive(Debug, Serialize)]
pub struct SamplingReport {
    /// ERE window for update `t` of `total`.
    pub window: usize,
    /// Exact probability per buffer item, oldest first; 0 outside the window.
    pub expected: Vec<f64>,
    pub observed: Vec<f64>,
    /// Importance weight of each item if drawn, before batch max-normalization.
    pub is_weight: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
pub fn sampling_report(
    priorities: &[f64],
    nu: f64,
    eta: f64,
    c_min: usize,
    t: usize,
    total: usize,
    draws: usize,
    seed: u64,
) -> Result<SamplingReport> {
    let n = priorities.len();
    let cfg = BufferConfig {
        capacity: n.max(1),
        eta,
        c_min: c_min.clamp(1, n.max(1)),
        nu,
        ..Default::default()
    };
    let mut buf = ReplayBuffer::new(cfg.clone())?;
    let ids: Vec<u64> = (0..n)
        .map(|_| {
            buf.push(Transition {
                state: vec![0.0],
                action: SimplexAction::uniform(1),
                reward: 0.0,
                next_state: vec![0.0],
                done: true,
            })
        })
        .collect();
    buf.update_priorities(&ids, priorities);
    let window = ere_window(&cfg, t, total, n).max(1);
    let probs = buf.window_probabilities(window);
    let mut expected = vec![0.0; n];
    expected[n - window..].copy_from_slice(&probs);
    let mut counts = vec![0usize; n];
    let mut rng = seed::stream(seed, "demo/replay", &[]);
    // Batches may not exceed the buffer length, so draw in buffer-sized chunks.
    let mut left = draws.max(1);
    while left > 0 {
        let b = left.min(n);
        for id in buf.sample_window(b, window, &mut rng)?.ids {
            counts[id as usize] += 1;
        }
        left -= b;
    }
    let draws = draws.max(1) as f64;
    let is_weight = expected
        .iter()
        .map(|&p| {
            if p > 0.0 {
                (1.0 / (window as f64 * p)).powf(nu)
            } else {
                0.0
            }
        })
        .collect();
    Ok(SamplingReport {
        window,
        expected,
        observed: counts.iter().map(|&c| c as f64 / draws).collect(),
        is_weight,
    })
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn replay_sampling(
    priorities: Vec<f64>,
    nu: f64,
    eta: f64,
    c_min: usize,
    t: usize,
    total: usize,
    draws: usize,
    seed: u32,
) -> std::result::Result<String, JsValue> {
    sampling_report(
        &priorities,
        nu,
        eta,
        c_min,
        t,
        total,
        draws,
        u64::from(seed),
    )
    .map(|r| to_json(&r))
    .map_err(js_err)
}
