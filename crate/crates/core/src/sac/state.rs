//! Agent state: embeddings of the server and client models, clipped local
//! losses, and the previous action.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::nn::{FlatParams, Matrix};
use crate::qeen::Qeen;
use crate::simplex::SimplexAction;

/// Maps model parameters to fixed-length vectors for the agent state.
#[derive(Debug, Clone)]
pub enum StateEncoder {
    Qeen(Arc<Qeen>),
    /// Mean-pools the flat parameters into `dim` contiguous bins; the
    /// embedding-free baseline.
    Pooled {
        dim: usize,
    },
}

impl StateEncoder {
    pub fn embed_dim(&self) -> usize {
        match self {
            StateEncoder::Qeen(q) => q.embed_dim(),
            StateEncoder::Pooled { dim } => *dim,
        }
    }

    pub fn encode_many(&self, models: &[&FlatParams]) -> Result<Matrix> {
        match self {
            StateEncoder::Qeen(q) => q.encode_batch(models),
            StateEncoder::Pooled { dim } => {
                let mut out = Matrix::zeros(models.len(), *dim);
                for (r, m) in models.iter().enumerate() {
                    out.row_mut(r).copy_from_slice(&pool(m.values(), *dim)?);
                }
                Ok(out)
            }
        }
    }
}

/// Means over `dim` near-equal contiguous bins.
pub fn pool(values: &[f64], dim: usize) -> Result<Vec<f64>> {
    if dim == 0 || values.len() < dim {
        return Err(Error::Shape {
            context: "pooled state width",
            expected: values.len(),
            actual: dim,
        });
    }
    let (base, extra) = (values.len() / dim, values.len() % dim);
    let mut at = 0;
    Ok((0..dim)
        .map(|i| {
            let n = base + usize::from(i < extra);
            let m = values[at..at + n].iter().sum::<f64>() / n as f64;
            at += n;
            m
        })
        .collect())
}

/// `(K+1)·E + 2K`.
pub fn state_dim(k: usize, embed_dim: usize) -> usize {
    (k + 1) * embed_dim + 2 * k
}

/// Concatenates `[e_global, e_1..e_K, l_1..l_K, a_prev]`. Losses are clipped
/// to `[0, loss_clip]` and divided by `loss_clip`.
pub fn build_state(
    encoder: &StateEncoder,
    global: &FlatParams,
    uploads: &[FlatParams],
    losses: &[f64],
    prev_action: &SimplexAction,
    loss_clip: f64,
) -> Result<Vec<f64>> {
    let k = uploads.len();
    if losses.len() != k || prev_action.len() != k {
        return Err(Error::Shape {
            context: "state inputs",
            expected: k,
            actual: if losses.len() != k {
                losses.len()
            } else {
                prev_action.len()
            },
        });
    }
    let mut models: Vec<&FlatParams> = Vec::with_capacity(k + 1);
    models.push(global);
    models.extend(uploads.iter());
    let emb = encoder.encode_many(&models)?;
    let mut s = emb.into_vec();
    s.extend(losses.iter().map(|l| {
        let l = if l.is_finite() { *l } else { loss_clip };
        l.clamp(0.0, loss_clip) / loss_clip
    }));
    s.extend_from_slice(prev_action.weights());
    Ok(s)
}
