//! End-to-end runs of the experiment drivers on tiny synthetic setups.

use std::path::Path;

use fedweigh::experiment::{
    ablation, parse_config_str, run_fl, sweep, train_dearfsac, ExperimentConfig, Strategy,
    SweepAxis,
};
use fedweigh::ErrorCategory;

fn tiny(dir: &Path, strategy: &str) -> ExperimentConfig {
    let text = format!(
        r#"
strategy = "{strategy}"
seed = 3
rounds = 4
repeats = 2
episodes = 2
episode_rounds = 5

[dataset]
kind = "synthetic"
num_classes = 4
per_class = 60
feature_dim = 8
noise_sigma = 0.3

[federation]
clients = 10
k = 4
hidden = [8]

[defects]
m = 2

[qeen]
embed_dim = 8
hidden = 16
epochs = 3
corpus_rounds = 2

[sac]
hidden = [16, 16]
batch_size = 4

[replay]
capacity = 100
c_min = 4

[output]
dir = "{}"
"#,
        dir.display()
    );
    parse_config_str(&text).unwrap().0
}

fn read_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    (header, rows)
}

fn col(header: &[String], name: &str) -> usize {
    header
        .iter()
        .position(|h| h == name)
        .unwrap_or_else(|| panic!("no column {name}"))
}

#[test]
fn fedavg_run_is_byte_identical_across_reruns() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut ca = tiny(a.path(), "fedavg");
    ca.defects.m = 0;
    let mut cb = ca.clone();
    cb.output.dir = b.path().to_path_buf();
    let ra = run_fl(&ca).unwrap();
    let rb = run_fl(&cb).unwrap();
    assert_eq!(
        std::fs::read(&ra.metrics).unwrap(),
        std::fs::read(&rb.metrics).unwrap()
    );
    assert!(ra.manifest.exists());
}

#[test]
fn rule_based_with_one_clean_slot_puts_all_weight_there() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(dir.path(), "rule_based");
    cfg.federation.clients = 10;
    cfg.federation.k = 10;
    cfg.defects.m = 9;
    let summary = run_fl(&cfg).unwrap();
    let (h, rows) = read_rows(&summary.metrics);
    assert_eq!(rows.len(), cfg.rounds * cfg.repeats);
    for row in rows {
        let nonzero = (0..10)
            .filter(|i| row[col(&h, &format!("w_{i}"))].parse::<f64>().unwrap() > 0.0)
            .count();
        assert_eq!(nonzero, 1);
    }
}

#[test]
fn unreachable_target_prints_a_dash_and_acc_avg_matches_rows() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(dir.path(), "fedavg");
    cfg.agent.reward.target_accuracy = 1.0;
    cfg.rounds = 2;
    let s = run_fl(&cfg).unwrap();
    assert_eq!(s.t_delta_display(), "-");
    let (h, rows) = read_rows(&s.metrics);
    let (rc, tc) = (col(&h, "round"), col(&h, "test_accuracy"));
    let finals: Vec<f64> = rows
        .iter()
        .filter(|r| r[rc] == (cfg.rounds - 1).to_string())
        .map(|r| r[tc].parse().unwrap())
        .collect();
    assert_eq!(finals.len(), cfg.repeats);
    let mean = finals.iter().sum::<f64>() / finals.len() as f64;
    assert!((mean - s.acc_avg).abs() < 1e-6);
}

#[test]
fn dearfsac_without_checkpoints_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path(), "dearfsac");
    assert_eq!(run_fl(&cfg).unwrap_err().category(), ErrorCategory::Config);
    let mut cfg = cfg;
    cfg.checkpoints.qeen = Some(dir.path().join("nope.ckpt"));
    cfg.checkpoints.sac = Some(dir.path().join("nope2.ckpt"));
    assert_eq!(run_fl(&cfg).unwrap_err().category(), ErrorCategory::Input);
}

#[test]
fn one_episode_gives_one_return_and_its_rounds_then_the_agent_runs() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(dir.path(), "dearfsac");
    cfg.episodes = 1;
    cfg.episode_rounds = 50;
    let out = train_dearfsac(&cfg).unwrap();
    assert_eq!(read_rows(&out.reward_curve).1.len(), 1);
    assert_eq!(read_rows(&out.metrics).1.len(), 50);
    assert!(out.qeen_checkpoint.as_ref().unwrap().exists() && out.sac_checkpoint.exists());

    let mut eval = cfg.clone();
    eval.output.dir = dir.path().join("eval");
    eval.checkpoints.qeen = out.qeen_checkpoint.clone();
    eval.checkpoints.sac = Some(out.sac_checkpoint.clone());
    let s = run_fl(&eval).unwrap();
    assert_eq!(s.final_accuracies.len(), eval.repeats);
    let manifest = std::fs::read_to_string(&s.manifest).unwrap();
    assert!(manifest.contains("sac.ckpt") && manifest.contains("blob_sha256"));

    eval.strategy = Strategy::DearfsacNodefectShadow;
    let (h, rows) = read_rows(&run_fl(&eval).unwrap().metrics);
    assert!(rows
        .iter()
        .all(|r| (0..4).all(|i| r[col(&h, &format!("defect_{i}"))] == "0")));
}

#[test]
fn ablation_writes_three_comparable_curves() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path(), "dearfsac");
    let outs = ablation(&cfg).unwrap();
    assert_eq!(outs.len(), 3);
    let mut counts = Vec::new();
    for o in &outs {
        let (h, rows) = read_rows(&o.reward_curve);
        assert_eq!(h[0], "variant");
        assert_eq!(h[1], "state_dim");
        assert!(rows
            .iter()
            .all(|r| r[0] == o.variant.as_str() && r[1] == o.state_dim.to_string()));
        counts.push((rows.len(), read_rows(&o.metrics).1.len()));
    }
    assert!(counts.windows(2).all(|w| w[0] == w[1]));
    // The pooled baseline keeps the same state length as the embedding variants.
    assert!(outs.windows(2).all(|w| w[0].state_dim == w[1].state_dim));
}

#[test]
fn sweep_has_one_row_per_value_and_strategy() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(dir.path(), "fedavg");
    cfg.repeats = 1;
    cfg.rounds = 2;
    let strategies = [Strategy::Fedavg, Strategy::RuleBased];
    let (path, rows) = sweep(&cfg, SweepAxis::M, &[0.0, 1.0, 3.0], &strategies).unwrap();
    assert_eq!(rows.len(), 6);
    let (h, file_rows) = read_rows(&path);
    assert_eq!(h[0], "m");
    assert_eq!(file_rows.len(), 6);
    assert!(sweep(&cfg, SweepAxis::DegreeN, &[], &strategies).is_err());
}
