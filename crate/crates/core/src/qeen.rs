//! Quality-evaluation embedding network: an encoder from flat model
//! parameters to a short embedding, one decoder head per client-model layer,
//! and a small head that predicts how defective a model is.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::defects::{DefectKind, DefectPlan};
use crate::error::{Error, Result};
use crate::fed::{rule_based_weights, Federation, Uploads};
use crate::nn::{
    self, backward, chain, forward, forward_trace, read_checkpoint, write_checkpoint, Activation,
    Adam, FlatParams, Gradients, LayerSpec, Matrix, Section,
};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QeenConfig {
    pub embed_dim: usize,
    pub hidden: usize,
    pub head_hidden: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Corpus generation rounds per federation; each yields one model per client.
    pub corpus_rounds: usize,
    /// Independently initialised federations the corpus is drawn from. One
    /// trajectory gives embeddings that do not carry over to fresh runs.
    pub corpus_runs: usize,
    pub corpus_degree: f64,
    pub corpus_kinds: BTreeSet<DefectKind>,
}

impl Default for QeenConfig {
    fn default() -> Self {
        Self {
            embed_dim: 64,
            hidden: 256,
            head_hidden: 32,
            lambda1: 0.5,
            lambda2: 0.5,
            lr: 1e-3,
            epochs: 60,
            batch_size: 16,
            corpus_rounds: 10,
            corpus_runs: 4,
            corpus_degree: 0.5,
            corpus_kinds: DefectKind::ALL.into_iter().collect(),
        }
    }
}

/// Embedding of one model's parameters.
pub type Embedding = Vec<f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct Qeen {
    client_manifest: Vec<LayerSpec>,
    pub encoder: FlatParams,
    pub decoder_heads: Vec<FlatParams>,
    pub quality_head: FlatParams,
}

/// Labelled models for QEEN training.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub params: Vec<FlatParams>,
    pub marks: Vec<f64>,
    pub defective: Vec<bool>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn extend(&mut self, other: Corpus) {
        self.params.extend(other.params);
        self.marks.extend(other.marks);
        self.defective.extend(other.defective);
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    /// `(l1, l2, joint)` on the full corpus before training.
    pub initial: (f64, f64, f64),
    pub last: (f64, f64, f64),
    /// Per-step joint minibatch loss.
    pub curve: Vec<f64>,
}

impl Qeen {
    pub fn new(client_manifest: &[LayerSpec], cfg: &QeenConfig, seed: u64) -> Result<Self> {
        nn::validate_manifest(client_manifest)?;
        if cfg.embed_dim == 0 || cfg.hidden == 0 || cfg.head_hidden == 0 {
            return Err(Error::config(
                "qeen",
                "embedding and hidden widths must be positive",
            ));
        }
        let d = nn::param_count(client_manifest);
        let e = cfg.embed_dim;
        let encoder = FlatParams::init(
            chain(&[d, cfg.hidden, e], Activation::Relu, Activation::Identity),
            seed::derive(seed, "qeen/encoder", &[]),
        )?;
        let decoder_heads = client_manifest
            .iter()
            .enumerate()
            .map(|(k, l)| {
                FlatParams::init(
                    vec![LayerSpec::new(e, l.param_count(), Activation::Identity)],
                    seed::derive(seed, "qeen/decoder", &[k as u64]),
                )
            })
            .collect::<Result<_>>()?;
        let quality_head = FlatParams::init(
            chain(
                &[e, cfg.head_hidden, 1],
                Activation::Relu,
                Activation::Identity,
            ),
            seed::derive(seed, "qeen/quality", &[]),
        )?;
        Ok(Self {
            client_manifest: client_manifest.to_vec(),
            encoder,
            decoder_heads,
            quality_head,
        })
    }

    pub fn client_manifest(&self) -> &[LayerSpec] {
        &self.client_manifest
    }

    pub fn embed_dim(&self) -> usize {
        self.encoder.out_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.in_dim()
    }

    fn stack(&self, models: &[&FlatParams]) -> Result<Matrix> {
        let d = self.input_dim();
        let mut data = Vec::with_capacity(models.len() * d);
        for m in models {
            if m.d() != d {
                return Err(Error::Shape {
                    context: "qeen encoder input",
                    expected: d,
                    actual: m.d(),
                });
            }
            data.extend_from_slice(m.values());
        }
        Matrix::from_vec(models.len(), d, data)
    }

    fn check_embedding(&self, e: &[f64]) -> Result<()> {
        if e.len() != self.embed_dim() {
            return Err(Error::Shape {
                context: "embedding length",
                expected: self.embed_dim(),
                actual: e.len(),
            });
        }
        Ok(())
    }

    pub fn encode(&self, params: &FlatParams) -> Result<Embedding> {
        Ok(forward(&self.encoder, &self.stack(&[params])?)?.into_vec())
    }

    /// Embeds many models at once; one row per model.
    pub fn encode_batch(&self, models: &[&FlatParams]) -> Result<Matrix> {
        forward(&self.encoder, &self.stack(models)?)
    }

    pub fn decode(&self, e: &[f64]) -> Result<FlatParams> {
        self.check_embedding(e)?;
        let x = Matrix::from_vec(1, e.len(), e.to_vec())?;
        let mut values = Vec::with_capacity(self.input_dim());
        for head in &self.decoder_heads {
            values.extend(forward(head, &x)?.into_vec());
        }
        FlatParams::new(self.client_manifest.clone(), values)
    }

    pub fn quality_score(&self, e: &[f64]) -> Result<f64> {
        self.check_embedding(e)?;
        let x = Matrix::from_vec(1, e.len(), e.to_vec())?;
        Ok(forward(&self.quality_head, &x)?.get(0, 0))
    }

    /// Raw predicted marks for a set of models.
    pub fn score_models(&self, models: &[&FlatParams]) -> Result<Vec<f64>> {
        let emb = self.encode_batch(models)?;
        Ok(forward(&self.quality_head, &emb)?.into_vec())
    }

    /// `(l1, l2)`: mean per-model reconstruction MSE and mark MSE.
    pub fn losses(&self, models: &[FlatParams], marks: &[f64]) -> Result<(f64, f64)> {
        if models.len() != marks.len() {
            return Err(Error::Shape {
                context: "qeen marks",
                expected: models.len(),
                actual: marks.len(),
            });
        }
        if models.is_empty() {
            return Err(Error::Empty("qeen loss inputs"));
        }
        let (mut l1, mut l2) = (0.0, 0.0);
        for chunk in (0..models.len()).collect::<Vec<_>>().chunks(64) {
            let refs: Vec<&FlatParams> = chunk.iter().map(|&i| &models[i]).collect();
            let emb = self.encode_batch(&refs)?;
            let mut at = 0;
            for head in &self.decoder_heads {
                let out = forward(head, &emb)?;
                let w = out.cols();
                for (r, &i) in chunk.iter().enumerate() {
                    let target = &models[i].values()[at..at + w];
                    l1 += out
                        .row(r)
                        .iter()
                        .zip(target)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>();
                }
                at += w;
            }
            let q = forward(&self.quality_head, &emb)?;
            for (r, &i) in chunk.iter().enumerate() {
                l2 += (q.get(r, 0) - marks[i]).powi(2);
            }
        }
        let n = models.len() as f64;
        Ok((l1 / (n * self.input_dim() as f64), l2 / n))
    }

    /// Joint loss `λ1·l1 + λ2·l2` on a minibatch and its gradients.
    pub fn joint_loss_and_grads(
        &self,
        models: &[&FlatParams],
        marks: &[f64],
        lambda: (f64, f64),
    ) -> Result<(f64, QeenGrads)> {
        if models.len() != marks.len() || models.is_empty() {
            return Err(Error::Shape {
                context: "qeen minibatch marks",
                expected: models.len(),
                actual: marks.len(),
            });
        }
        let b = models.len() as f64;
        let d = self.input_dim() as f64;
        let x = self.stack(models)?;
        let enc = forward_trace(&self.encoder, &x)?;
        let emb = &enc.output;
        let mut grad_emb = Matrix::zeros(emb.rows(), emb.cols());
        let mut l1 = 0.0;
        let mut heads = Vec::with_capacity(self.decoder_heads.len());
        let mut at = 0;
        for head in &self.decoder_heads {
            let tr = forward_trace(head, emb)?;
            let w = tr.output.cols();
            let mut g = Matrix::zeros(tr.output.rows(), w);
            for (r, m) in models.iter().enumerate() {
                let target = &m.values()[at..at + w];
                for ((gv, o), t) in g.row_mut(r).iter_mut().zip(tr.output.row(r)).zip(target) {
                    let diff = o - t;
                    l1 += diff * diff;
                    *gv = lambda.0 * 2.0 * diff / (b * d);
                }
            }
            let (pg, ig) = backward(head, &tr, &g, true)?;
            add_into(&mut grad_emb, &ig.expect("input gradient requested"));
            heads.push(pg);
            at += w;
        }
        let tr = forward_trace(&self.quality_head, emb)?;
        let mut g = Matrix::zeros(tr.output.rows(), 1);
        let mut l2 = 0.0;
        for (r, &mark) in marks.iter().enumerate() {
            let diff = tr.output.get(r, 0) - mark;
            l2 += diff * diff;
            g.row_mut(r)[0] = lambda.1 * 2.0 * diff / b;
        }
        let joint = lambda.0 * l1 / (b * d) + lambda.1 * l2 / b;
        let quality = if lambda.1 != 0.0 {
            let (pg, ig) = backward(&self.quality_head, &tr, &g, true)?;
            add_into(&mut grad_emb, &ig.expect("input gradient requested"));
            Some(pg)
        } else {
            None
        };
        let (encoder, _) = backward(&self.encoder, &enc, &grad_emb, false)?;
        Ok((
            joint,
            QeenGrads {
                encoder,
                heads,
                quality,
            },
        ))
    }

    fn step(
        &mut self,
        models: &[&FlatParams],
        marks: &[f64],
        lambda: (f64, f64),
        opt: &mut QeenOptim,
    ) -> Result<f64> {
        let (joint, g) = self.joint_loss_and_grads(models, marks, lambda)?;
        if !joint.is_finite() {
            return Err(Error::Diverged {
                step: opt.steps,
                what: "qeen joint loss",
            });
        }
        if let Some(q) = &g.quality {
            opt.quality.step(self.quality_head.values_mut(), &q.values);
        }
        opt.encoder
            .step(self.encoder.values_mut(), &g.encoder.values);
        for ((head, o), hg) in self
            .decoder_heads
            .iter_mut()
            .zip(&mut opt.heads)
            .zip(&g.heads)
        {
            o.step(head.values_mut(), &hg.values);
        }
        opt.steps += 1;
        Ok(joint)
    }

    pub fn save(&self, path: &Path, seed: u64) -> Result<()> {
        let meta = serde_json::json!({ "client_manifest": self.client_manifest });
        let mut sections =
            vec![Section::new("qeen/encoder", self.encoder.clone(), seed).with_meta(meta)];
        for (k, h) in self.decoder_heads.iter().enumerate() {
            sections.push(Section::new(&format!("qeen/decoder/{k}"), h.clone(), seed));
        }
        sections.push(Section::new(
            "qeen/quality_head",
            self.quality_head.clone(),
            seed,
        ));
        write_checkpoint(BufWriter::new(File::create(path)?), &sections)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let sections = read_checkpoint(BufReader::new(File::open(path)?))?;
        Self::from_sections(sections)
    }

    pub fn from_sections(sections: Vec<Section>) -> Result<Self> {
        let mut it = sections.into_iter();
        let enc = it
            .next()
            .ok_or_else(|| Error::Checkpoint("no sections".into()))?;
        if enc.header.name.as_deref() != Some("qeen/encoder") {
            return Err(Error::Checkpoint(format!(
                "first section is {:?}, expected qeen/encoder",
                enc.header.name
            )));
        }
        let client_manifest: Vec<LayerSpec> = enc
            .header
            .meta
            .as_ref()
            .and_then(|m| m.get("client_manifest"))
            .map(|v| serde_json::from_value(v.clone()))
            .transpose()
            .map_err(|e| Error::Checkpoint(format!("bad client manifest: {e}")))?
            .ok_or_else(|| Error::Checkpoint("encoder section lacks client_manifest".into()))?;
        let rest: Vec<Section> = it.collect();
        let (quality, heads) = rest
            .split_last()
            .ok_or_else(|| Error::Checkpoint("missing quality head".into()))?;
        if heads.len() != client_manifest.len() {
            return Err(Error::Checkpoint(format!(
                "{} decoder heads for a {}-layer client model",
                heads.len(),
                client_manifest.len()
            )));
        }
        for (h, l) in heads.iter().zip(&client_manifest) {
            if h.params.out_dim() != l.param_count() {
                return Err(Error::ManifestMismatch(
                    "decoder head width differs from layer size".into(),
                ));
            }
        }
        Ok(Self {
            client_manifest,
            encoder: enc.params,
            decoder_heads: heads.iter().map(|s| s.params.clone()).collect(),
            quality_head: quality.params.clone(),
        })
    }
}

fn add_into(acc: &mut Matrix, g: &Matrix) {
    for (a, b) in acc.as_mut_slice().iter_mut().zip(g.as_slice()) {
        *a += b;
    }
}

/// Gradients of the joint loss, one per sub-network. `quality` is `None`
/// when the mark loss has zero weight.
#[derive(Debug, Clone)]
pub struct QeenGrads {
    pub encoder: Gradients,
    pub heads: Vec<Gradients>,
    pub quality: Option<Gradients>,
}

struct QeenOptim {
    encoder: Adam,
    heads: Vec<Adam>,
    quality: Adam,
    steps: usize,
}

/// Trains `qeen` on the corpus with Adam on `λ1·l1 + λ2·l2`.
pub fn train_qeen(
    qeen: &mut Qeen,
    corpus: &Corpus,
    cfg: &QeenConfig,
    seed: u64,
) -> Result<TrainReport> {
    if cfg.lambda1 < 0.0 || cfg.lambda2 < 0.0 {
        return Err(Error::config(
            "qeen.lambda",
            "loss weights must be non-negative",
        ));
    }
    if corpus.is_empty() {
        return Err(Error::Empty("qeen corpus"));
    }
    let lambda = (cfg.lambda1, cfg.lambda2);
    let joint = |(l1, l2): (f64, f64)| (l1, l2, lambda.0 * l1 + lambda.1 * l2);
    let mut report = TrainReport {
        initial: joint(qeen.losses(&corpus.params, &corpus.marks)?),
        ..Default::default()
    };
    let mut opt = QeenOptim {
        encoder: Adam::new(qeen.encoder.d(), cfg.lr),
        heads: qeen
            .decoder_heads
            .iter()
            .map(|h| Adam::new(h.d(), cfg.lr))
            .collect(),
        quality: Adam::new(qeen.quality_head.d(), cfg.lr),
        steps: 0,
    };
    let mut rng = seed::stream(seed, "qeen/train", &[]);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let models: Vec<&FlatParams> = chunk.iter().map(|&i| &corpus.params[i]).collect();
            let marks: Vec<f64> = chunk.iter().map(|&i| corpus.marks[i]).collect();
            report
                .curve
                .push(qeen.step(&models, &marks, lambda, &mut opt)?);
        }
        if epoch % 10 == 0 || epoch + 1 == cfg.epochs {
            log::debug!(
                "qeen epoch {epoch}: joint {:.6}",
                report.curve.last().copied().unwrap_or(0.0)
            );
        }
    }
    report.last = joint(qeen.losses(&corpus.params, &corpus.marks)?);
    log::info!(
        "qeen trained: joint loss {:.6} -> {:.6} over {} steps",
        report.initial.2,
        report.last.2,
        opt.steps
    );
    Ok(report)
}

/// Generates `rounds × N` labelled models from a federation.
///
/// Each round every client trains from the current global model; a uniformly
/// drawn half of them carries `kinds` defects at `degree`. The global model
/// then advances by averaging the clean uploads.
pub fn generate_corpus(
    fed: &mut Federation,
    rounds: usize,
    degree: f64,
    kinds: &BTreeSet<DefectKind>,
    seed: u64,
) -> Result<Corpus> {
    let n = fed.num_clients();
    let mut corpus = Corpus::default();
    for r in 0..rounds {
        let plan = DefectPlan::sample(n, n / 2, degree, kinds.clone(), seed, r as u64)?;
        let mut uploads = Uploads {
            round: fed.round(),
            ids: (0..n).collect(),
            params: Vec::with_capacity(n),
            losses: Vec::with_capacity(n),
            defect_flags: (0..n).map(|i| plan.is_defective(i)).collect(),
            marks: (0..n)
                .map(|i| crate::defects::ground_truth_mark(i, &plan))
                .collect(),
        };
        for id in 0..n {
            let (p, l) = fed.train_client(id, &plan)?;
            uploads.params.push(p);
            uploads.losses.push(l);
        }
        let weights = rule_based_weights(&uploads.defect_flags);
        corpus.params.extend(uploads.params.iter().cloned());
        corpus.marks.extend(uploads.marks.iter().map(|m| m.0));
        corpus
            .defective
            .extend(uploads.defect_flags.iter().copied());
        fed.apply(&uploads, weights)?;
    }
    Ok(corpus)
}

/// Min-max normalization into `[0, 1]`; a constant batch maps to 0.5.
pub fn normalize_scores(scores: &[f64]) -> Vec<f64> {
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if !(span > 0.0) || !span.is_finite() {
        return vec![0.5; scores.len()];
    }
    scores
        .iter()
        .map(|s| ((s - lo) / span).clamp(0.0, 1.0))
        .collect()
}

/// Area under the ROC curve for `scores` ranking `positive` items higher.
/// Ties count one half. Returns `None` without both classes.
pub fn auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let pos: Vec<f64> = scores
        .iter()
        .zip(positive)
        .filter(|(_, p)| **p)
        .map(|(s, _)| *s)
        .collect();
    let neg: Vec<f64> = scores
        .iter()
        .zip(positive)
        .filter(|(_, p)| !**p)
        .map(|(s, _)| *s)
        .collect();
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    let mut wins = 0.0;
    for p in &pos {
        for n in &neg {
            wins += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    Some(wins / (pos.len() * neg.len()) as f64)
}

pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (na > 0.0 && nb > 0.0).then(|| (dot / (na * nb)).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> QeenConfig {
        QeenConfig {
            embed_dim: 4,
            hidden: 8,
            head_hidden: 3,
            epochs: 2,
            batch_size: 2,
            ..Default::default()
        }
    }

    fn manifest() -> Vec<LayerSpec> {
        chain(&[3, 4, 2], Activation::Relu, Activation::Softmax)
    }

    #[test]
    fn shapes_follow_client_manifest() {
        let q = Qeen::new(&manifest(), &small_cfg(), 1).unwrap();
        let p = FlatParams::init(manifest(), 2).unwrap();
        let e = q.encode(&p).unwrap();
        assert_eq!(e.len(), 4);
        assert_eq!(e, q.encode(&p).unwrap());
        let back = q.decode(&e).unwrap();
        assert_eq!(back.manifest(), p.manifest());
        // Slice k of the decoded model is head k's output.
        let x = Matrix::from_vec(1, 4, e.clone()).unwrap();
        let h1 = forward(&q.decoder_heads[1], &x).unwrap();
        assert_eq!(&back.values()[back.layer_range(1)], h1.as_slice());
        assert!(q.quality_score(&e).unwrap().is_finite());
        assert!(q.decode(&[0.0; 3]).is_err());
        let wrong =
            FlatParams::init(chain(&[2, 2], Activation::Relu, Activation::Identity), 0).unwrap();
        assert!(q.encode(&wrong).is_err());
    }

    #[test]
    fn losses_arithmetic() {
        let mut q = Qeen::new(&manifest(), &small_cfg(), 1).unwrap();
        let p = FlatParams::init(manifest(), 2).unwrap();
        // Quality head that outputs exactly its bias.
        q.quality_head.zero_last_layer();
        let (w, b) = q.quality_head.layer_slices_mut(1);
        w.fill(0.0);
        b[0] = 0.1;
        let (_, l2) = q.losses(&[p.clone(), p.clone()], &[0.0, 0.1]).unwrap();
        assert!((l2 - 0.005).abs() < 1e-12);
        let (_, l2) = q.losses(std::slice::from_ref(&p), &[0.1]).unwrap();
        assert!(l2.abs() < 1e-20);
        assert!(q.losses(&[p], &[]).is_err());
    }

    #[test]
    fn zero_lambda2_leaves_head_untouched() {
        let m = manifest();
        let mut q = Qeen::new(&m, &small_cfg(), 1).unwrap();
        let corpus = Corpus {
            params: (0..6)
                .map(|s| FlatParams::init(m.clone(), s).unwrap())
                .collect(),
            marks: vec![0.0, 0.5, 0.0, 0.5, 0.0, 0.5],
            defective: vec![false, true, false, true, false, true],
        };
        let head = q.quality_head.clone();
        let enc = q.encoder.clone();
        let cfg = QeenConfig {
            lambda2: 0.0,
            ..small_cfg()
        };
        train_qeen(&mut q, &corpus, &cfg, 0).unwrap();
        assert_eq!(q.quality_head, head);
        assert_ne!(q.encoder, enc);
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_scores(&[0.0, 1.0, 0.5]), vec![0.0, 1.0, 0.5]);
        assert_eq!(normalize_scores(&[3.0, 3.0]), vec![0.5, 0.5]);
        let a = normalize_scores(&[0.2, -1.0, 4.0]);
        let b = normalize_scores(&[0.2 * 3.0 + 7.0, -3.0 + 7.0, 12.0 + 7.0]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn auc_cases() {
        assert_eq!(
            auc(&[0.9, 0.8, 0.1, 0.2], &[true, true, false, false]),
            Some(1.0)
        );
        assert_eq!(
            auc(&[0.1, 0.2, 0.9, 0.8], &[true, true, false, false]),
            Some(0.0)
        );
        assert_eq!(auc(&[0.5, 0.5], &[true, false]), Some(0.5));
        assert_eq!(auc(&[0.5], &[true]), None);
    }

    #[test]
    fn checkpoint_roundtrip() {
        let q = Qeen::new(&manifest(), &small_cfg(), 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.ckpt");
        q.save(&path, 3).unwrap();
        assert_eq!(Qeen::load(&path).unwrap(), q);
        assert!(matches!(
            Qeen::load(&dir.path().join("nope")),
            Err(Error::MissingFile(_))
        ));
    }
}
