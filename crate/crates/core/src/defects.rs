//! Defect injection: noisy local data, noisy uploads, shuffled labels.

use std::collections::BTreeSet;

use rand::seq::{index, SliceRandom};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Batch, FlatParams, Matrix};
use crate::seed::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefectKind {
    DataContamination,
    LabelShuffle,
    CommLoss,
}

impl DefectKind {
    pub const ALL: [DefectKind; 3] = [
        DefectKind::DataContamination,
        DefectKind::LabelShuffle,
        DefectKind::CommLoss,
    ];
}

/// Which clients are defective, how badly, and in what ways.
#[derive(Debug, Clone, PartialEq)]
pub struct DefectPlan {
    pub defective_clients: BTreeSet<usize>,
    pub degree: f64,
    pub kinds: BTreeSet<DefectKind>,
    pub seed: u64,
}

impl DefectPlan {
    pub fn none(seed: u64) -> Self {
        Self {
            defective_clients: BTreeSet::new(),
            degree: 0.0,
            kinds: BTreeSet::new(),
            seed,
        }
    }

    pub fn new(
        defective_clients: BTreeSet<usize>,
        degree: f64,
        kinds: BTreeSet<DefectKind>,
        seed: u64,
    ) -> Result<Self> {
        if !(degree >= 0.0 && degree.is_finite()) {
            return Err(Error::config(
                "defects.degree",
                "must be finite and non-negative",
            ));
        }
        if !defective_clients.is_empty() && kinds.is_empty() {
            return Err(Error::config(
                "defects.kinds",
                "must be non-empty when m > 0",
            ));
        }
        Ok(Self {
            defective_clients,
            degree,
            kinds,
            seed,
        })
    }

    /// Picks `m` of `n` clients uniformly without replacement.
    pub fn sample(
        n: usize,
        m: usize,
        degree: f64,
        kinds: BTreeSet<DefectKind>,
        seed: u64,
        draw: u64,
    ) -> Result<Self> {
        if m > n {
            return Err(Error::config(
                "defects.m",
                format!("m = {m} exceeds N = {n}"),
            ));
        }
        let mut rng = seed::stream(seed, "defects/members", &[draw]);
        let set = index::sample(&mut rng, n, m).into_iter().collect();
        Self::new(set, degree, kinds, seed)
    }

    pub fn m(&self) -> usize {
        self.defective_clients.len()
    }

    pub fn is_defective(&self, client: usize) -> bool {
        self.defective_clients.contains(&client)
    }

    pub fn has(&self, client: usize, kind: DefectKind) -> bool {
        self.is_defective(client) && self.kinds.contains(&kind)
    }

    /// Local-training hooks for `client` (no-ops for clean clients).
    pub fn hooks_for(&self, client: usize) -> DefectHooks {
        DefectHooks {
            contamination: self
                .has(client, DefectKind::DataContamination)
                .then_some(self.degree),
            shuffle_labels: self.has(client, DefectKind::LabelShuffle),
        }
    }

    /// Dedicated stream for one client's injections in one round.
    pub fn rng(&self, round: u64, client: usize) -> Rng {
        seed::stream(self.seed, "defects/inject", &[round, client as u64])
    }

    /// Applies communication loss to an upload if the client is affected.
    pub fn corrupt_upload(
        &self,
        round: u64,
        client: usize,
        params: FlatParams,
    ) -> Result<FlatParams> {
        if self.has(client, DefectKind::CommLoss) {
            let mut rng = seed::stream(self.seed, "defects/comm", &[round, client as u64]);
            perturb_comm(&params, self.degree, &mut rng)
        } else {
            Ok(params)
        }
    }
}

/// Per-batch corruption applied inside local training.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DefectHooks {
    pub contamination: Option<f64>,
    pub shuffle_labels: bool,
}

impl DefectHooks {
    pub fn is_clean(&self) -> bool {
        self.contamination.is_none() && !self.shuffle_labels
    }

    /// Contamination first, then label shuffling.
    pub fn apply(&self, batch: Batch, rng: &mut Rng) -> Batch {
        let mut batch = match self.contamination {
            Some(d) => contaminate_batch(&batch, d, rng),
            None => batch,
        };
        if self.shuffle_labels {
            shuffle_labels(&mut batch, rng);
        }
        batch
    }
}

/// `p + g·d` per pixel with `g ~ N(0,1)`, clipped to `[0, 1]`.
pub fn contaminate_batch(batch: &Batch, degree: f64, rng: &mut Rng) -> Batch {
    if degree == 0.0 {
        return batch.clone();
    }
    let mut inputs: Matrix = batch.inputs.clone();
    add_pixel_noise(inputs.as_mut_slice(), degree, rng);
    for v in inputs.as_mut_slice() {
        *v = v.clamp(0.0, 1.0);
    }
    Batch {
        inputs,
        labels: batch.labels.clone(),
    }
}

/// Unclipped `p + g·d` noise; [`contaminate_batch`] clips afterwards.
pub fn add_pixel_noise(values: &mut [f64], degree: f64, rng: &mut Rng) {
    for v in values {
        let g: f64 = StandardNormal.sample(rng);
        *v += g * degree;
    }
}

/// Adds `g·d` (`g ~ N(0,1)`) to every parameter of the final two layers.
pub fn perturb_comm(params: &FlatParams, degree: f64, rng: &mut Rng) -> Result<FlatParams> {
    let layers = params.manifest().len();
    if layers < 2 {
        return Err(Error::ManifestMismatch(format!(
            "communication loss needs at least two layers, model has {layers}"
        )));
    }
    let mut out = params.clone();
    if degree == 0.0 {
        return Ok(out);
    }
    let start = params.layer_range(layers - 2).start;
    for v in &mut out.values_mut()[start..] {
        let g: f64 = StandardNormal.sample(rng);
        *v += g * degree;
    }
    Ok(out)
}

/// Uniformly permutes the batch labels in place. Returns `false` (and leaves
/// the batch alone) when there are fewer than two labels.
pub fn shuffle_labels(batch: &mut Batch, rng: &mut Rng) -> bool {
    if batch.labels.len() < 2 {
        log::warn!(
            "label shuffle skipped: batch has {} label(s)",
            batch.labels.len()
        );
        return false;
    }
    batch.labels.shuffle(rng);
    true
}

/// Ground-truth or predicted defect degree of one model.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct QualityMark(pub f64);

pub fn ground_truth_mark(client: usize, plan: &DefectPlan) -> QualityMark {
    if plan.is_defective(client) {
        QualityMark(plan.degree)
    } else {
        QualityMark(0.0)
    }
}
