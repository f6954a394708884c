//! QEEN joint-loss gradient check and small end-to-end training runs.

use std::sync::Arc;

use fedweigh::data::{partition_iid, synth_dataset, SynthSpec};
use fedweigh::defects::{perturb_comm, DefectKind};
use fedweigh::fed::{Federation, FlData, LocalTrainConfig};
use fedweigh::nn::{chain, Activation, FlatParams};
use fedweigh::qeen::{auc, cosine, generate_corpus, train_qeen, Qeen, QeenConfig};
use fedweigh::seed;

fn federation(seed: u64) -> Federation {
    let spec = SynthSpec {
        num_classes: 10,
        per_class: 60,
        feature_dim: 32,
        noise_sigma: 0.15,
    };
    let ds = synth_dataset(&spec, seed).unwrap();
    let (train, test) = ds.split(0.8, seed).unwrap();
    let partition = partition_iid(&train, 20, seed).unwrap();
    let data = Arc::new(FlData {
        partition,
        validation: test.clone(),
        test,
        train,
        manifest: chain(&[32, 12, 10], Activation::Relu, Activation::Softmax),
    });
    let local = LocalTrainConfig {
        epochs: 1,
        batch_size: 16,
        lr: 0.1,
    };
    Federation::new(data, 5, local, seed, 0).unwrap()
}

#[test]
fn joint_gradient_matches_finite_differences() {
    let m = chain(&[3, 4, 2], Activation::Tanh, Activation::Identity);
    let cfg = QeenConfig {
        embed_dim: 3,
        hidden: 5,
        head_hidden: 4,
        ..Default::default()
    };
    let mut q = Qeen::new(&m, &cfg, 4).unwrap();
    let models: Vec<FlatParams> = (0..3)
        .map(|s| FlatParams::init(m.clone(), 10 + s).unwrap())
        .collect();
    let refs: Vec<&FlatParams> = models.iter().collect();
    let marks = [0.0, 0.5, 0.2];
    let lambda = (0.7, 0.3);
    let (_, g) = q.joint_loss_and_grads(&refs, &marks, lambda).unwrap();
    let eps = 1e-5;
    let check = |analytic: f64, plus: f64, minus: f64| {
        let numeric = (plus - minus) / (2.0 * eps);
        let denom = analytic.abs().max(numeric.abs()).max(1e-6);
        assert!(
            (analytic - numeric).abs() / denom < 1e-4,
            "{analytic} vs {numeric}"
        );
    };
    let joint = |q: &Qeen| q.joint_loss_and_grads(&refs, &marks, lambda).unwrap().0;
    for i in 0..q.encoder.d() {
        let base = q.encoder.values()[i];
        q.encoder.values_mut()[i] = base + eps;
        let p = joint(&q);
        q.encoder.values_mut()[i] = base - eps;
        let n = joint(&q);
        q.encoder.values_mut()[i] = base;
        check(g.encoder.values[i], p, n);
    }
    for i in 0..q.quality_head.d() {
        let base = q.quality_head.values()[i];
        q.quality_head.values_mut()[i] = base + eps;
        let p = joint(&q);
        q.quality_head.values_mut()[i] = base - eps;
        let n = joint(&q);
        q.quality_head.values_mut()[i] = base;
        check(g.quality.as_ref().unwrap().values[i], p, n);
    }
    for k in 0..q.decoder_heads.len() {
        for i in 0..q.decoder_heads[k].d() {
            let base = q.decoder_heads[k].values()[i];
            q.decoder_heads[k].values_mut()[i] = base + eps;
            let p = joint(&q);
            q.decoder_heads[k].values_mut()[i] = base - eps;
            let n = joint(&q);
            q.decoder_heads[k].values_mut()[i] = base;
            check(g.heads[k].values[i], p, n);
        }
    }
}

#[test]
fn training_reduces_loss_and_separates_defects() {
    let mut fed = federation(1);
    let kinds = DefectKind::ALL.into_iter().collect();
    let corpus = generate_corpus(&mut fed, 10, 0.5, &kinds, 1).unwrap();
    assert_eq!(corpus.len(), 200);
    assert_eq!(corpus.defective.iter().filter(|d| **d).count(), 100);

    let cfg = QeenConfig {
        epochs: 40,
        ..Default::default()
    };
    let mut q = Qeen::new(fed.global().manifest(), &cfg, 1).unwrap();
    let report = train_qeen(&mut q, &corpus, &cfg, 1).unwrap();
    assert!(report.last.2 < 0.5 * report.initial.2, "{:?}", report);

    // Fresh models from a later stage of a different federation.
    let mut fresh_fed = federation(2);
    let fresh = generate_corpus(&mut fresh_fed, 2, 0.5, &kinds, 2).unwrap();
    let refs: Vec<&FlatParams> = fresh.params.iter().collect();
    let scores = q.score_models(&refs).unwrap();
    let a = auc(&scores, &fresh.defective).unwrap();
    assert!(a >= 0.9, "auc {a}");
    let mean = |want: bool| {
        let v: Vec<f64> = scores
            .iter()
            .zip(&fresh.defective)
            .filter(|(_, d)| **d == want)
            .map(|(s, _)| *s)
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    assert!(mean(true) > mean(false));

    // Reconstruction of held-out clean models from later rounds of the same
    // federation improves at least tenfold.
    let later = generate_corpus(&mut fed, 2, 0.5, &kinds, 11).unwrap();
    let held: Vec<FlatParams> = later
        .params
        .iter()
        .zip(&later.defective)
        .filter(|(_, d)| !**d)
        .map(|(p, _)| p.clone())
        .collect();
    let zeros = vec![0.0; held.len()];
    let untrained = Qeen::new(fed.global().manifest(), &cfg, 1).unwrap();
    let (before, _) = untrained.losses(&held, &zeros).unwrap();
    let (after, _) = q.losses(&held, &zeros).unwrap();
    assert!(after * 10.0 <= before, "{before} -> {after}");
}

#[test]
fn clean_embeddings_closer_than_perturbed() {
    let kinds = DefectKind::ALL.into_iter().collect();
    let mut fed = federation(3);
    let corpus = generate_corpus(&mut fed, 10, 0.5, &kinds, 3).unwrap();
    let cfg = QeenConfig {
        epochs: 30,
        ..Default::default()
    };
    let mut q = Qeen::new(fed.global().manifest(), &cfg, 3).unwrap();
    train_qeen(&mut q, &corpus, &cfg, 3).unwrap();
    let plan = fedweigh::defects::DefectPlan::none(0);
    let mut wins = 0;
    for s in 0..10u64 {
        let a = fed.train_client(s as usize, &plan).unwrap().0;
        let b = fed.train_client(s as usize + 10, &plan).unwrap().0;
        let noisy = perturb_comm(&b, 0.5, &mut seed::stream(s, "test/comm", &[])).unwrap();
        let (ea, eb, en) = (
            q.encode(&a).unwrap(),
            q.encode(&b).unwrap(),
            q.encode(&noisy).unwrap(),
        );
        if cosine(&ea, &eb).unwrap() > cosine(&ea, &en).unwrap() {
            wins += 1;
        }
    }
    assert!(wins >= 9, "{wins}/10");
}
