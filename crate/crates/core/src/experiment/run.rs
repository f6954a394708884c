//! Experiment drivers behind the CLI subcommands.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use crate::data::{load_idx, partition_iid, partition_noniid, synth_dataset, PartitionMode};
use crate::defects::DefectPlan;
use crate::error::{Error, Result};
use crate::fed::{FedAvg, Federation, FlData, RuleBased, WeightStrategy};
use crate::nn::{chain, Activation};
use crate::qeen::{generate_corpus, train_qeen, Corpus, Qeen, TrainReport};
use crate::replay::ReplayBuffer;
use crate::sac::{
    round_rewards, state_dim, AgentEnvConfig, DrlAgent, PolicyStrategy, Sac, StateEncoder,
};
use crate::seed;

use super::config::{DatasetSpec, ExperimentConfig, Strategy};
use super::metrics::{
    write_manifest, write_reward_curve, EpisodeRecord, MetricsWriter, RoundRecord,
};

/// Training episodes use run indices from here on, so their initial models
/// and defect draws never coincide with evaluation repeats `0..R`.
pub const TRAIN_RUN_OFFSET: u64 = 1 << 20;
/// Run index of the federation that generates the QEEN corpus.
pub const CORPUS_RUN: u64 = 1 << 30;

/// Loads the dataset, splits off validation and test sets, and partitions the
/// rest over the clients.
pub fn load_data(cfg: &ExperimentConfig) -> Result<Arc<FlData>> {
    let full = match &cfg.dataset {
        DatasetSpec::Idx {
            images,
            labels,
            limit,
        } => {
            let ds = load_idx(images, labels)?;
            match limit {
                Some(n) if *n < ds.len() => ds.subset(&(0..*n).collect::<Vec<_>>()),
                _ => ds,
            }
        }
        spec @ DatasetSpec::Synthetic { .. } => synth_dataset(
            &spec.synth().expect("synthetic"),
            seed::derive(cfg.seed, "data/synth", &[]),
        )?,
    };
    let s = &cfg.split;
    let (rest, test) = full.split(
        1.0 - s.test_fraction,
        seed::derive(cfg.seed, "data/split", &[0]),
    )?;
    let keep = 1.0 - s.validation_fraction / (1.0 - s.test_fraction);
    let (train, validation) = rest.split(keep, seed::derive(cfg.seed, "data/split", &[1]))?;
    let f = &cfg.federation;
    let part_seed = seed::derive(cfg.seed, "data/partition", &[]);
    let partition = match cfg.partition.mode {
        PartitionMode::Iid => partition_iid(&train, f.clients, part_seed)?,
        PartitionMode::Noniid => partition_noniid(
            &train,
            f.clients,
            cfg.partition.shards_per_client,
            part_seed,
        )?,
    };
    let mut dims = vec![train.feature_dim()];
    dims.extend(&f.hidden);
    dims.push(train.num_classes);
    log::info!(
        "data: {} train / {} validation / {} test, {} clients, model {:?}",
        train.len(),
        validation.len(),
        test.len(),
        f.clients,
        dims
    );
    Ok(Arc::new(FlData {
        manifest: chain(&dims, Activation::Relu, Activation::Softmax),
        train,
        partition,
        validation,
        test,
    }))
}

/// The defect plan for evaluation repeat or training episode `draw`.
pub fn defect_plan(cfg: &ExperimentConfig, draw: u64) -> Result<DefectPlan> {
    let d = &cfg.defects;
    if d.m == 0 || cfg.strategy == Strategy::DearfsacNodefectShadow {
        return Ok(DefectPlan::none(cfg.seed));
    }
    DefectPlan::sample(
        cfg.federation.clients,
        d.m,
        d.degree,
        d.kinds.clone(),
        cfg.seed,
        draw,
    )
}

/// Outcome of [`run_fl`].
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub metrics: PathBuf,
    pub manifest: PathBuf,
    /// Final-round test accuracy of every repeat.
    pub final_accuracies: Vec<f64>,
    /// Mean of `final_accuracies`.
    pub acc_avg: f64,
    /// Test accuracy per round, averaged over repeats.
    pub mean_curve: Vec<f64>,
    /// First round (1-based) where `mean_curve` reaches the target.
    pub t_delta: Option<usize>,
}

impl RunSummary {
    pub fn t_delta_display(&self) -> String {
        self.t_delta
            .map_or_else(|| "-".to_string(), |t| t.to_string())
    }
}

/// First 1-based index whose value reaches `target`.
pub fn rounds_to_target(curve: &[f64], target: f64) -> Option<usize> {
    curve.iter().position(|&a| a >= target).map(|i| i + 1)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

/// Loads the trained agent and QEEN named in the config and checks that they
/// fit this federation.
fn load_agent(cfg: &ExperimentConfig, data: &FlData) -> Result<(Arc<Sac>, Arc<Qeen>)> {
    let missing = |what: &str| {
        Error::config(
            format!("checkpoints.{what}"),
            format!(
                "strategy {} needs a trained {what} checkpoint",
                cfg.strategy.as_str()
            ),
        )
    };
    let qpath = cfg
        .checkpoints
        .qeen
        .as_ref()
        .ok_or_else(|| missing("qeen"))?;
    let spath = cfg.checkpoints.sac.as_ref().ok_or_else(|| missing("sac"))?;
    let qeen = Qeen::load(qpath)?;
    let sac = Sac::load(spath)?;
    if qeen.client_manifest() != data.manifest.as_slice() {
        return Err(Error::ManifestMismatch(format!(
            "{} was trained for a different client model",
            qpath.display()
        )));
    }
    let k = cfg.federation.k;
    if sac.k != k || sac.state_dim != state_dim(k, qeen.embed_dim()) {
        return Err(Error::Checkpoint(format!(
            "{}: agent has K = {}, state length {}; this run needs K = {k}, state length {}",
            spath.display(),
            sac.k,
            sac.state_dim,
            state_dim(k, qeen.embed_dim())
        )));
    }
    Ok((Arc::new(sac), Arc::new(qeen)))
}

/// Runs `repeats` independent FL trainings with the configured strategy and
/// writes one metrics row per round.
pub fn run_fl(cfg: &ExperimentConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let data = load_data(cfg)?;
    run_fl_with(cfg, &data)
}

/// [`run_fl`] on already loaded data.
pub fn run_fl_with(cfg: &ExperimentConfig, data: &Arc<FlData>) -> Result<RunSummary> {
    let dir = &cfg.output.dir;
    ensure_dir(dir)?;
    let agent = if cfg.strategy.needs_agent() {
        Some(load_agent(cfg, data)?)
    } else {
        None
    };
    let scorer = agent.as_ref().map(|(_, q)| Arc::clone(q));
    let k = cfg.federation.k;
    let metrics_path = dir.join("metrics.csv");
    let mut writer = MetricsWriter::create(&metrics_path, k, &[])?;
    let mut final_accuracies = Vec::with_capacity(cfg.repeats);
    let mut curve_sum = vec![0.0; cfg.rounds];
    for repeat in 0..cfg.repeats as u64 {
        let mut fed = Federation::new(Arc::clone(data), k, cfg.federation.local, cfg.seed, repeat)?;
        let plan = defect_plan(cfg, repeat)?;
        let mut strategy: Box<dyn WeightStrategy> = match (&cfg.strategy, &agent) {
            (Strategy::Fedavg, _) => Box::new(FedAvg),
            (Strategy::RuleBased, _) => Box::new(RuleBased),
            (_, Some((sac, qeen))) => Box::new(PolicyStrategy::new(
                Arc::clone(sac),
                StateEncoder::Qeen(Arc::clone(qeen)),
                cfg.agent.loss_clip,
            )),
            (_, None) => unreachable!("agent loaded above"),
        };
        let mut last = 0.0;
        for slot in curve_sum.iter_mut() {
            let start = Instant::now();
            let uploads = fed.collect_uploads(&plan)?;
            let weights = strategy.weights(&crate::fed::RoundContext {
                round: fed.round(),
                global: fed.global(),
                uploads: &uploads,
            })?;
            let result = fed.apply(&uploads, weights)?;
            let rewards = round_rewards(&result, &uploads, scorer.as_deref(), &cfg.agent.reward)?;
            let wall_ms = if cfg.output.wall_clock {
                start.elapsed().as_millis() as u64
            } else {
                0
            };
            writer.write(&RoundRecord::new(
                repeat,
                cfg.strategy.as_str(),
                &result,
                rewards,
                wall_ms,
            ))?;
            *slot += result.test_accuracy;
            last = result.test_accuracy;
        }
        log::info!(
            "{} repeat {repeat}: final test accuracy {last:.4}",
            cfg.strategy.as_str()
        );
        final_accuracies.push(last);
    }
    writer.finish()?;
    let r = cfg.repeats as f64;
    let mean_curve: Vec<f64> = curve_sum.iter().map(|s| s / r).collect();
    let mut hashed = vec![metrics_path.clone()];
    if agent.is_some() {
        hashed.extend(cfg.checkpoints.qeen.iter().cloned());
        hashed.extend(cfg.checkpoints.sac.iter().cloned());
    }
    let manifest = write_manifest(dir, "run", cfg.seed, &cfg.to_toml(), &hashed)?;
    Ok(RunSummary {
        metrics: metrics_path,
        manifest,
        acc_avg: final_accuracies.iter().sum::<f64>() / r,
        final_accuracies,
        t_delta: rounds_to_target(&mean_curve, cfg.agent.reward.target_accuracy),
        mean_curve,
    })
}

/// Which state and reward the agent is trained with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// QEEN embeddings, all three rewards.
    Full,
    /// QEEN trained without its quality head; `r2` off.
    EmbeddingSac,
    /// Mean-pooled raw parameters instead of embeddings; `r2` off.
    OriginalSac,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Full, Variant::EmbeddingSac, Variant::OriginalSac];

    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Full => "dearfsac",
            Variant::EmbeddingSac => "embedding_sac",
            Variant::OriginalSac => "original_sac",
        }
    }
}

/// Artifacts of one agent training.
#[derive(Debug, Clone)]
pub struct TrainOutputs {
    pub variant: Variant,
    pub qeen_checkpoint: Option<PathBuf>,
    pub sac_checkpoint: PathBuf,
    pub reward_curve: PathBuf,
    pub metrics: PathBuf,
    pub manifest: PathBuf,
    pub qeen_report: Option<TrainReport>,
    pub state_dim: usize,
    pub episodes: Vec<EpisodeRecord>,
}

/// Phase 1: generate a labelled corpus and fit QEEN on it.
pub fn train_qeen_phase(
    cfg: &ExperimentConfig,
    data: &Arc<FlData>,
    lambda2: f64,
) -> Result<(Qeen, TrainReport)> {
    let mut qcfg = cfg.qeen.clone();
    qcfg.lambda2 = lambda2;
    let mut corpus = Corpus::default();
    for r in 0..qcfg.corpus_runs as u64 {
        let mut fed = Federation::new(
            Arc::clone(data),
            cfg.federation.k,
            cfg.federation.local,
            cfg.seed,
            CORPUS_RUN + r,
        )?;
        corpus.extend(generate_corpus(
            &mut fed,
            qcfg.corpus_rounds,
            qcfg.corpus_degree,
            &qcfg.corpus_kinds,
            seed::derive(cfg.seed, "qeen/corpus", &[r]),
        )?);
    }
    log::info!(
        "qeen corpus: {} models, {} defective",
        corpus.len(),
        corpus.defective.iter().filter(|d| **d).count()
    );
    let mut qeen = Qeen::new(
        &data.manifest,
        &qcfg,
        seed::derive(cfg.seed, "qeen/init", &[]),
    )?;
    let report = train_qeen(
        &mut qeen,
        &corpus,
        &qcfg,
        seed::derive(cfg.seed, "qeen/train", &[]),
    )?;
    if !report.last.2.is_finite() {
        return Err(Error::Diverged {
            step: report.curve.len(),
            what: "qeen joint loss",
        });
    }
    Ok((qeen, report))
}

/// Trains one agent variant: QEEN first (unless the variant does without),
/// then `episodes` learning episodes of `episode_rounds` rounds.
pub fn train_variant(
    cfg: &ExperimentConfig,
    data: &Arc<FlData>,
    variant: Variant,
    dir: &Path,
) -> Result<TrainOutputs> {
    ensure_dir(dir)?;
    let k = cfg.federation.k;
    let mut env: AgentEnvConfig = cfg.agent;
    let (encoder, scorer, qeen_report, qeen_checkpoint) = match variant {
        Variant::Full | Variant::EmbeddingSac => {
            let lambda2 = if variant == Variant::Full {
                cfg.qeen.lambda2
            } else {
                0.0
            };
            let (qeen, report) = train_qeen_phase(cfg, data, lambda2)?;
            let path = dir.join("qeen.ckpt");
            qeen.save(&path, cfg.seed)?;
            let qeen = Arc::new(qeen);
            let scorer = (variant == Variant::Full).then(|| Arc::clone(&qeen));
            (StateEncoder::Qeen(qeen), scorer, Some(report), Some(path))
        }
        Variant::OriginalSac => (
            StateEncoder::Pooled {
                dim: cfg.qeen.embed_dim,
            },
            None,
            None,
            None,
        ),
    };
    if variant != Variant::Full {
        env.reward.beta[1] = 0.0;
    }
    let sdim = state_dim(k, encoder.embed_dim());
    let sac = Sac::new(
        sdim,
        k,
        cfg.sac.clone(),
        seed::derive(cfg.seed, "sac/init", &[]),
    )?;
    let mut agent = DrlAgent {
        sac,
        replay: ReplayBuffer::new(cfg.replay.clone())?,
        encoder,
        scorer,
        env,
    };
    let tag = [
        ("variant", variant.as_str().to_string()),
        ("state_dim", sdim.to_string()),
    ];
    let metrics_path = dir.join("train_metrics.csv");
    let mut writer = MetricsWriter::create(&metrics_path, k, &tag)?;
    let mut episodes = Vec::with_capacity(cfg.episodes);
    for e in 0..cfg.episodes as u64 {
        let run = TRAIN_RUN_OFFSET + e;
        let start = Instant::now();
        let mut fed = Federation::new(Arc::clone(data), k, cfg.federation.local, cfg.seed, run)?;
        let plan = defect_plan(cfg, run)?;
        let report = agent.run_episode(&mut fed, &plan, cfg.episode_rounds, true, cfg.seed, e)?;
        let s = report.mean_stats;
        if ![s.critic_loss, s.actor_loss, s.alpha, s.entropy, report.ret]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(Error::Diverged {
                step: agent.sac.updates,
                what: "sac update statistics",
            });
        }
        let wall = if cfg.output.wall_clock {
            start.elapsed().as_millis() as u64
        } else {
            0
        };
        for log in &report.rounds {
            writer.write(&RoundRecord::new(
                e,
                variant.as_str(),
                &log.result,
                log.rewards,
                wall,
            ))?;
        }
        let rec = EpisodeRecord {
            episode: e,
            ret: report.ret,
            final_accuracy: report.final_accuracy(),
            final_test_accuracy: report.final_test_accuracy(),
            mean_reward: report.rounds.iter().map(|l| l.rewards.total).sum::<f64>()
                / report.rounds.len() as f64,
            alpha: agent.sac.alpha(),
            entropy: s.entropy,
            critic_loss: s.critic_loss,
            updates: report.updates,
        };
        log::info!(
            "{} episode {e}: G {:.4}, final accuracy {:.4}, alpha {:.4}",
            variant.as_str(),
            rec.ret,
            rec.final_accuracy,
            rec.alpha
        );
        episodes.push(rec);
    }
    writer.finish()?;
    let curve_path = dir.join("reward_curve.csv");
    write_reward_curve(&curve_path, &tag, &episodes)?;
    let sac_path = dir.join("sac.ckpt");
    agent.sac.save(&sac_path, cfg.seed)?;
    let mut hashed = vec![metrics_path.clone(), curve_path.clone(), sac_path.clone()];
    hashed.extend(qeen_checkpoint.iter().cloned());
    let manifest = write_manifest(dir, "train", cfg.seed, &cfg.to_toml(), &hashed)?;
    Ok(TrainOutputs {
        variant,
        qeen_checkpoint,
        sac_checkpoint: sac_path,
        reward_curve: curve_path,
        metrics: metrics_path,
        manifest,
        qeen_report,
        state_dim: sdim,
        episodes,
    })
}

/// Trains the full agent; writes QEEN and SAC checkpoints and the reward
/// curve into the output directory.
pub fn train_dearfsac(cfg: &ExperimentConfig) -> Result<TrainOutputs> {
    cfg.validate()?;
    let data = load_data(cfg)?;
    train_variant(cfg, &data, Variant::Full, &cfg.output.dir)
}

/// Trains all three variants on identical seeds, one subdirectory each.
pub fn ablation(cfg: &ExperimentConfig) -> Result<Vec<TrainOutputs>> {
    cfg.validate()?;
    let data = load_data(cfg)?;
    Variant::ALL
        .iter()
        .map(|&v| train_variant(cfg, &data, v, &cfg.output.dir.join(v.as_str())))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    /// Number of defective clients.
    M,
    /// Defect degree.
    DegreeN,
}

impl SweepAxis {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepAxis::M => "m",
            SweepAxis::DegreeN => "d_n",
        }
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "m" => Ok(SweepAxis::M),
            "d_n" | "dn" | "degree" => Ok(SweepAxis::DegreeN),
            _ => Err(Error::config(
                "axis",
                format!("unknown sweep axis `{s}` (expected m or d_n)"),
            )),
        }
    }
}

/// One summary row of a sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: f64,
    pub strategy: Strategy,
    pub summary: RunSummary,
}

/// Runs every strategy at every axis value; writes `sweep_summary.csv`.
pub fn sweep(
    cfg: &ExperimentConfig,
    axis: SweepAxis,
    values: &[f64],
    strategies: &[Strategy],
) -> Result<(PathBuf, Vec<SweepRow>)> {
    if values.is_empty() {
        return Err(Error::config("values", "sweep needs at least one value"));
    }
    if strategies.is_empty() {
        return Err(Error::config(
            "strategies",
            "sweep needs at least one strategy",
        ));
    }
    cfg.validate()?;
    let data = load_data(cfg)?;
    let base = &cfg.output.dir;
    ensure_dir(base)?;
    let mut rows = Vec::with_capacity(values.len() * strategies.len());
    for &value in values {
        for &strategy in strategies {
            let mut c = cfg.clone();
            c.strategy = strategy;
            match axis {
                SweepAxis::M => {
                    if value < 0.0 || value.fract() != 0.0 {
                        return Err(Error::config(
                            "values",
                            format!("M must be a whole number, got {value}"),
                        ));
                    }
                    c.defects.m = value as usize;
                }
                SweepAxis::DegreeN => c.defects.degree = value,
            }
            c.output.dir = base
                .join(format!("{}_{value}", axis.as_str()))
                .join(strategy.as_str());
            c.validate()?;
            let summary = run_fl_with(&c, &data)?;
            log::info!(
                "sweep {}={value} {}: Acc_avg {:.4}, T_delta {}",
                axis.as_str(),
                strategy.as_str(),
                summary.acc_avg,
                summary.t_delta_display()
            );
            rows.push(SweepRow {
                value,
                strategy,
                summary,
            });
        }
    }
    let path = base.join("sweep_summary.csv");
    let mut text = format!("{},strategy,acc_avg,t_delta,repeats\n", axis.as_str());
    for r in &rows {
        text.push_str(&format!(
            "{},{},{:.6},{},{}\n",
            r.value,
            r.strategy.as_str(),
            r.summary.acc_avg,
            r.summary.t_delta_display(),
            r.summary.final_accuracies.len()
        ));
    }
    std::fs::write(&path, text)?;
    let mut hashed = vec![path.clone()];
    hashed.extend(rows.iter().map(|r| r.summary.metrics.clone()));
    write_manifest(base, "sweep", cfg.seed, &cfg.to_toml(), &hashed)?;
    Ok((path, rows))
}
