//! Datasets, IDX ingestion and client partitioning.

use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Batch, Matrix};
use crate::seed;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `n × feature_dim`, values in `[0, 1]`.
    pub inputs: Matrix,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn new(inputs: Matrix, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if inputs.rows() != labels.len() {
            return Err(Error::CountMismatch {
                images: inputs.rows(),
                labels: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Shape {
                context: "label below num_classes",
                expected: num_classes,
                actual: bad,
            });
        }
        Ok(Self {
            inputs,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.inputs.cols()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            inputs: self.inputs.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        }
    }

    pub fn batch(&self, idx: &[usize]) -> Result<Batch> {
        Batch::new(
            self.inputs.select_rows(idx),
            idx.iter().map(|&i| self.labels[i]).collect(),
        )
    }

    pub fn as_batch(&self) -> Result<Batch> {
        Batch::new(self.inputs.clone(), self.labels.clone())
    }

    pub fn class_histogram(&self, idx: &[usize]) -> Vec<usize> {
        let mut h = vec![0; self.num_classes];
        for &i in idx {
            h[self.labels[i]] += 1;
        }
        h
    }

    /// Seeded shuffle, then the first `train_fraction` of rows become the
    /// training split and the rest the test split.
    pub fn split(&self, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(0.0..=1.0).contains(&train_fraction) {
            return Err(Error::config("train_fraction", "must lie in [0, 1]"));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut seed::stream(seed, "data/split", &[]));
        let cut = (self.len() as f64 * train_fraction).round() as usize;
        Ok((self.subset(&idx[..cut]), self.subset(&idx[cut..])))
    }
}

fn read_be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Truncated {
            path: path.to_owned(),
            needed: at + 4,
            available: bytes.len(),
        })
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path.to_owned())
        } else {
            Error::Io(e)
        }
    })
}

/// Parses an IDX image file and label file pair from memory.
pub fn parse_idx(
    images: &[u8],
    labels: &[u8],
    images_path: &Path,
    labels_path: &Path,
) -> Result<Dataset> {
    let magic = read_be_u32(images, 0, images_path)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::BadMagic {
            path: images_path.to_owned(),
            expected: IDX_IMAGES_MAGIC,
            found: magic,
        });
    }
    let lmagic = read_be_u32(labels, 0, labels_path)?;
    if lmagic != IDX_LABELS_MAGIC {
        return Err(Error::BadMagic {
            path: labels_path.to_owned(),
            expected: IDX_LABELS_MAGIC,
            found: lmagic,
        });
    }
    let n = read_be_u32(images, 4, images_path)? as usize;
    let rows = read_be_u32(images, 8, images_path)? as usize;
    let cols = read_be_u32(images, 12, images_path)? as usize;
    let n_labels = read_be_u32(labels, 4, labels_path)? as usize;
    if n != n_labels {
        return Err(Error::CountMismatch {
            images: n,
            labels: n_labels,
        });
    }
    let feat = rows * cols;
    let need = 16 + n * feat;
    if images.len() < need {
        return Err(Error::Truncated {
            path: images_path.to_owned(),
            needed: need,
            available: images.len(),
        });
    }
    if labels.len() < 8 + n {
        return Err(Error::Truncated {
            path: labels_path.to_owned(),
            needed: 8 + n,
            available: labels.len(),
        });
    }
    let pixels = images[16..need]
        .iter()
        .map(|&b| f64::from(b) / 255.0)
        .collect();
    let labels: Vec<usize> = labels[8..8 + n].iter().map(|&b| usize::from(b)).collect();
    let num_classes = labels.iter().max().map_or(1, |m| m + 1);
    Dataset::new(Matrix::from_vec(n, feat, pixels)?, labels, num_classes)
}

pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    parse_idx(&read_file(ip)?, &read_file(lp)?, ip, lp)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub num_classes: usize,
    pub per_class: usize,
    pub feature_dim: usize,
    pub noise_sigma: f64,
}

/// Gaussian blobs around per-class anchors drawn uniformly from `[0,1]^f`,
/// clipped back to `[0,1]`. Rows are ordered class by class.
pub fn synth_dataset(spec: &SynthSpec, seed: u64) -> Result<Dataset> {
    if spec.num_classes == 0 || spec.per_class == 0 || spec.feature_dim == 0 {
        return Err(Error::Empty("synthetic dataset dimensions"));
    }
    let mut anchor_rng = seed::stream(seed, "data/anchors", &[]);
    let unit = Uniform::new_inclusive(0.0, 1.0);
    let anchors: Vec<Vec<f64>> = (0..spec.num_classes)
        .map(|_| {
            (0..spec.feature_dim)
                .map(|_| unit.sample(&mut anchor_rng))
                .collect()
        })
        .collect();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut rng = seed::stream(seed, "data/noise", &[]);
    let n = spec.num_classes * spec.per_class;
    let mut data = Vec::with_capacity(n * spec.feature_dim);
    let mut labels = Vec::with_capacity(n);
    for (c, anchor) in anchors.iter().enumerate() {
        for _ in 0..spec.per_class {
            for &a in anchor {
                let v = a + spec.noise_sigma * normal.sample(&mut rng);
                data.push(v.clamp(0.0, 1.0));
            }
            labels.push(c);
        }
    }
    Dataset::new(
        Matrix::from_vec(n, spec.feature_dim, data)?,
        labels,
        spec.num_classes,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionMode {
    Iid,
    Noniid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub client_indices: Vec<Vec<usize>>,
    pub mode: PartitionMode,
}

impl Partition {
    pub fn num_clients(&self) -> usize {
        self.client_indices.len()
    }
}

fn near_equal_chunks(items: &[usize], parts: usize) -> Vec<Vec<usize>> {
    let base = items.len() / parts;
    let extra = items.len() % parts;
    let mut out = Vec::with_capacity(parts);
    let mut at = 0;
    for p in 0..parts {
        let size = base + usize::from(p < extra);
        out.push(items[at..at + size].to_vec());
        at += size;
    }
    out
}

/// Shuffled near-equal shards (sizes differ by at most one).
pub fn partition_iid(dataset: &Dataset, clients: usize, seed: u64) -> Result<Partition> {
    if clients == 0 || clients > dataset.len() {
        return Err(Error::Infeasible(format!(
            "{clients} clients for {} samples",
            dataset.len()
        )));
    }
    let mut idx: Vec<usize> = (0..dataset.len()).collect();
    idx.shuffle(&mut seed::stream(seed, "data/iid", &[]));
    Ok(Partition {
        client_indices: near_equal_chunks(&idx, clients),
        mode: PartitionMode::Iid,
    })
}

/// Label-sorted shard scheme: sort by label, cut into
/// `clients * shards_per_client` contiguous shards, deal them out at random.
pub fn partition_noniid(
    dataset: &Dataset,
    clients: usize,
    shards_per_client: usize,
    seed: u64,
) -> Result<Partition> {
    let shards = clients * shards_per_client;
    if clients == 0 || shards_per_client == 0 || shards > dataset.len() {
        return Err(Error::Infeasible(format!(
            "{clients} clients × {shards_per_client} shards for {} samples",
            dataset.len()
        )));
    }
    let mut rng = seed::stream(seed, "data/noniid", &[]);
    let mut idx: Vec<usize> = (0..dataset.len()).collect();
    // Shuffle first so the order within one label is seed-dependent.
    idx.shuffle(&mut rng);
    idx.sort_by_key(|&i| dataset.labels[i]);
    let pieces = near_equal_chunks(&idx, shards);
    let mut order: Vec<usize> = (0..shards).collect();
    order.shuffle(&mut rng);
    let client_indices = order
        .chunks(shards_per_client)
        .map(|ids| {
            ids.iter()
                .flat_map(|&s| pieces[s].iter().copied())
                .collect()
        })
        .collect();
    Ok(Partition {
        client_indices,
        mode: PartitionMode::Noniid,
    })
}

/// Total-variation distance between a client's label distribution and uniform.
pub fn label_tv_from_uniform(dataset: &Dataset, idx: &[usize]) -> f64 {
    let h = dataset.class_histogram(idx);
    let n = idx.len().max(1) as f64;
    let u = 1.0 / dataset.num_classes as f64;
    0.5 * h.iter().map(|&c| (c as f64 / n - u).abs()).sum::<f64>()
}
