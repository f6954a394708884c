//! Feed-forward networks over flat parameter vectors.
//!
//! A network is nothing more than a [`FlatParams`]: one `Vec<f64>` plus the
//! ordered list of [`LayerSpec`]s that says how to slice it. Each layer
//! occupies `out_dim * in_dim` row-major weights followed by `out_dim`
//! biases. Client models, the quality-embedding network and the actor/critic
//! networks all use this one representation, so aggregation, defect injection
//! and checkpointing never need to know which kind of model they touch.

mod checkpoint;
mod matrix;
mod net;
mod optim;

use rand::distributions::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointHeader, Section};
pub use matrix::Matrix;
pub(crate) use matrix::{matmul_ab, matmul_abt, matmul_atb_acc};
pub(crate) use net::softmax_in_place as softmax_row;
pub use net::{
    backward, cross_entropy_grad, forward, forward_trace, loss_and_grad, mse_loss_and_grad,
    mse_vec, ForwardTrace, LossKind,
};
pub use optim::{sgd_step, Adam};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Softmax,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub const fn new(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            in_dim,
            out_dim,
            activation,
        }
    }

    #[inline]
    pub fn param_count(&self) -> usize {
        self.in_dim * self.out_dim + self.out_dim
    }
}

/// Builds a chain `dims[0] → dims[1] → … → dims[n]` with `hidden` activation
/// on every layer except the last, which gets `last`.
pub fn chain(dims: &[usize], hidden: Activation, last: Activation) -> Vec<LayerSpec> {
    let n = dims.len().saturating_sub(1);
    (0..n)
        .map(|i| {
            let act = if i + 1 == n { last } else { hidden };
            LayerSpec::new(dims[i], dims[i + 1], act)
        })
        .collect()
}

pub fn validate_manifest(manifest: &[LayerSpec]) -> Result<()> {
    if manifest.is_empty() {
        return Err(Error::ManifestMismatch("manifest has no layers".into()));
    }
    for (i, l) in manifest.iter().enumerate() {
        if l.in_dim == 0 || l.out_dim == 0 {
            return Err(Error::ManifestMismatch(format!(
                "layer {i} has a zero dimension"
            )));
        }
        if l.activation == Activation::Softmax && i + 1 != manifest.len() {
            return Err(Error::ManifestMismatch(format!(
                "softmax on layer {i} is only allowed on the final layer"
            )));
        }
        if i > 0 && manifest[i - 1].out_dim != l.in_dim {
            return Err(Error::Shape {
                context: "layer chaining",
                expected: manifest[i - 1].out_dim,
                actual: l.in_dim,
            });
        }
    }
    Ok(())
}

pub fn param_count(manifest: &[LayerSpec]) -> usize {
    manifest.iter().map(LayerSpec::param_count).sum()
}

/// A model's parameters as one flat vector plus its layer manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatParams {
    values: Vec<f64>,
    manifest: Vec<LayerSpec>,
}

/// Borrowed view of one layer's weights and biases.
#[derive(Debug, Clone, Copy)]
pub struct LayerView<'a> {
    pub spec: LayerSpec,
    /// Row-major `(out_dim, in_dim)`.
    pub weights: &'a [f64],
    pub biases: &'a [f64],
}

impl FlatParams {
    pub fn new(manifest: Vec<LayerSpec>, values: Vec<f64>) -> Result<Self> {
        validate_manifest(&manifest)?;
        let d = param_count(&manifest);
        if values.len() != d {
            return Err(Error::Shape {
                context: "flat params length",
                expected: d,
                actual: values.len(),
            });
        }
        Ok(Self { values, manifest })
    }

    pub fn zeros(manifest: Vec<LayerSpec>) -> Result<Self> {
        let d = param_count(&manifest);
        Self::new(manifest, vec![0.0; d])
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(manifest: Vec<LayerSpec>, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(manifest)?;
        let mut rng = seed::stream(seed, "nn/init", &[]);
        for k in 0..p.manifest.len() {
            let spec = p.manifest[k];
            let limit = (6.0 / (spec.in_dim + spec.out_dim) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit);
            let (w, _) = p.layer_slices_mut(k);
            for v in w {
                *v = dist.sample(&mut rng);
            }
        }
        Ok(p)
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn manifest(&self) -> &[LayerSpec] {
        &self.manifest
    }

    pub fn in_dim(&self) -> usize {
        self.manifest[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.manifest[self.manifest.len() - 1].out_dim
    }

    /// Offset range of layer `k` inside the flat vector.
    pub fn layer_range(&self, k: usize) -> std::ops::Range<usize> {
        let start: usize = self.manifest[..k].iter().map(LayerSpec::param_count).sum();
        start..start + self.manifest[k].param_count()
    }

    pub fn layer(&self, k: usize) -> LayerView<'_> {
        let spec = self.manifest[k];
        let r = self.layer_range(k);
        let (w, b) = self.values[r].split_at(spec.in_dim * spec.out_dim);
        LayerView {
            spec,
            weights: w,
            biases: b,
        }
    }

    pub fn layer_slices_mut(&mut self, k: usize) -> (&mut [f64], &mut [f64]) {
        let spec = self.manifest[k];
        let r = self.layer_range(k);
        self.values[r].split_at_mut(spec.in_dim * spec.out_dim)
    }

    /// Splits into per-layer `(weights, biases)` vectors.
    pub fn unflatten(&self) -> Vec<(Vec<f64>, Vec<f64>)> {
        (0..self.manifest.len())
            .map(|k| {
                let l = self.layer(k);
                (l.weights.to_vec(), l.biases.to_vec())
            })
            .collect()
    }

    pub fn from_layers(manifest: Vec<LayerSpec>, layers: &[(Vec<f64>, Vec<f64>)]) -> Result<Self> {
        let values = layers
            .iter()
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
            .collect();
        Self::new(manifest, values)
    }

    pub fn same_layout(&self, other: &FlatParams) -> bool {
        self.manifest == other.manifest
    }

    pub fn ensure_same_layout(&self, other: &FlatParams) -> Result<()> {
        if self.same_layout(other) {
            Ok(())
        } else {
            Err(Error::ManifestMismatch(format!(
                "{} params vs {} params",
                self.d(),
                other.d()
            )))
        }
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Zeroes the final layer so the network initially outputs its biases (zero).
    pub fn zero_last_layer(&mut self) {
        let k = self.manifest.len() - 1;
        let (w, b) = self.layer_slices_mut(k);
        w.fill(0.0);
        b.fill(0.0);
    }

    /// `self ← rho·self + (1−rho)·other`.
    pub fn blend_from(&mut self, other: &FlatParams, rho: f64) -> Result<()> {
        self.ensure_same_layout(other)?;
        for (t, o) in self.values.iter_mut().zip(&other.values) {
            *t = rho * *t + (1.0 - rho) * o;
        }
        Ok(())
    }
}

/// Gradient vector with the same layout as the [`FlatParams`] it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub values: Vec<f64>,
}

impl Gradients {
    pub fn zeros(d: usize) -> Self {
        Self {
            values: vec![0.0; d],
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.values {
            *v *= s;
        }
    }

    pub fn add_scaled(&mut self, other: &Gradients, s: f64) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += s * b;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Classification batch: inputs plus integer class ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Matrix,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn new(inputs: Matrix, labels: Vec<usize>) -> Result<Self> {
        if inputs.rows() != labels.len() {
            return Err(Error::Shape {
                context: "batch labels",
                expected: inputs.rows(),
                actual: labels.len(),
            });
        }
        if labels.is_empty() {
            return Err(Error::Empty("batch"));
        }
        Ok(Self { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn param_count_matches_layout() {
        let m = chain(&[784, 32, 10], Activation::Relu, Activation::Softmax);
        assert_eq!(param_count(&m), 784 * 32 + 32 + 32 * 10 + 10);
        let p = FlatParams::init(m, 1).unwrap();
        assert_eq!(p.d(), 25_450);
        assert_eq!(p.layer_range(1), 25_120..25_450);
    }

    #[test]
    fn init_is_glorot_bounded_with_zero_bias() {
        let p = FlatParams::init(
            chain(&[20, 10, 3], Activation::Relu, Activation::Identity),
            3,
        )
        .unwrap();
        let l0 = p.layer(0);
        let lim = (6.0f64 / 30.0).sqrt();
        assert!(l0.weights.iter().all(|w| w.abs() <= lim));
        assert!(l0.biases.iter().all(|&b| b == 0.0));
        assert_eq!(p, FlatParams::init(p.manifest().to_vec(), 3).unwrap());
    }

    #[test]
    fn softmax_must_be_last() {
        let m = vec![
            LayerSpec::new(2, 2, Activation::Softmax),
            LayerSpec::new(2, 2, Activation::Identity),
        ];
        assert!(validate_manifest(&m).is_err());
        assert!(validate_manifest(&[LayerSpec::new(0, 2, Activation::Relu)]).is_err());
    }

    proptest! {
        #[test]
        fn unflatten_roundtrip(dims in proptest::collection::vec(1usize..6, 2..5), seed in 0u64..1000) {
            let m = chain(&dims, Activation::Tanh, Activation::Identity);
            let p = FlatParams::init(m.clone(), seed).unwrap();
            let back = FlatParams::from_layers(m, &p.unflatten()).unwrap();
            prop_assert_eq!(back, p);
        }
    }
}
