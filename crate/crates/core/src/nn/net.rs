use serde::{Deserialize, Serialize};

use super::{
    matmul_ab, matmul_abt, matmul_atb_acc, Activation, Batch, FlatParams, Gradients, Matrix,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    CrossEntropy,
    Mse,
}

/// Activations recorded during a forward pass, consumed by [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Input to each layer (`layer_inputs[0]` is the network input).
    pub layer_inputs: Vec<Matrix>,
    /// Pre-activation of each layer.
    pub pre: Vec<Matrix>,
    pub output: Matrix,
}

fn activate(act: Activation, z: &Matrix) -> Matrix {
    let mut y = z.clone();
    match act {
        Activation::Identity => {}
        Activation::Relu => {
            for v in y.as_mut_slice() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
        Activation::Tanh => {
            for v in y.as_mut_slice() {
                *v = v.tanh();
            }
        }
        Activation::Softmax => {
            for i in 0..y.rows() {
                softmax_in_place(y.row_mut(i));
            }
        }
    }
    y
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

fn affine(params: &FlatParams, k: usize, x: &Matrix) -> Matrix {
    let l = params.layer(k);
    let b = x.rows();
    let mut z = Matrix::zeros(b, l.spec.out_dim);
    matmul_abt(
        x.as_slice(),
        l.weights,
        b,
        l.spec.in_dim,
        l.spec.out_dim,
        z.as_mut_slice(),
    );
    for i in 0..b {
        for (v, bias) in z.row_mut(i).iter_mut().zip(l.biases) {
            *v += bias;
        }
    }
    z
}

fn check_input(params: &FlatParams, inputs: &Matrix) -> Result<()> {
    if inputs.cols() != params.in_dim() {
        return Err(Error::Shape {
            context: "network input width",
            expected: params.in_dim(),
            actual: inputs.cols(),
        });
    }
    Ok(())
}

pub fn forward(params: &FlatParams, inputs: &Matrix) -> Result<Matrix> {
    check_input(params, inputs)?;
    let mut x = inputs.clone();
    for k in 0..params.manifest().len() {
        let z = affine(params, k, &x);
        x = activate(params.manifest()[k].activation, &z);
        if !x.all_finite() {
            return Err(Error::NonFinite {
                layer: k,
                stage: "forward",
            });
        }
    }
    Ok(x)
}

pub fn forward_trace(params: &FlatParams, inputs: &Matrix) -> Result<ForwardTrace> {
    check_input(params, inputs)?;
    let n = params.manifest().len();
    let mut layer_inputs = Vec::with_capacity(n);
    let mut pre = Vec::with_capacity(n);
    let mut x = inputs.clone();
    for k in 0..n {
        let z = affine(params, k, &x);
        let y = activate(params.manifest()[k].activation, &z);
        if !y.all_finite() {
            return Err(Error::NonFinite {
                layer: k,
                stage: "forward",
            });
        }
        layer_inputs.push(x);
        pre.push(z);
        x = y;
    }
    Ok(ForwardTrace {
        layer_inputs,
        pre,
        output: x,
    })
}

/// Maps an upstream gradient w.r.t. a layer's output to one w.r.t. its pre-activation.
fn activation_backward(act: Activation, z: &Matrix, y: &Matrix, grad_y: &Matrix) -> Matrix {
    let mut g = grad_y.clone();
    match act {
        Activation::Identity => {}
        Activation::Relu => {
            for (gv, zv) in g.as_mut_slice().iter_mut().zip(z.as_slice()) {
                if *zv <= 0.0 {
                    *gv = 0.0;
                }
            }
        }
        Activation::Tanh => {
            for (gv, yv) in g.as_mut_slice().iter_mut().zip(y.as_slice()) {
                *gv *= 1.0 - yv * yv;
            }
        }
        Activation::Softmax => {
            for i in 0..g.rows() {
                let s = y.row(i);
                let dot: f64 = g.row(i).iter().zip(s).map(|(a, b)| a * b).sum();
                for (gv, sv) in g.row_mut(i).iter_mut().zip(s) {
                    *gv = sv * (*gv - dot);
                }
            }
        }
    }
    g
}

/// Backpropagates `grad_output` (w.r.t. the network output) through the trace.
///
/// Returns parameter gradients and, when `want_input_grad`, the gradient
/// w.r.t. the network input.
pub fn backward(
    params: &FlatParams,
    trace: &ForwardTrace,
    grad_output: &Matrix,
    want_input_grad: bool,
) -> Result<(Gradients, Option<Matrix>)> {
    let last = params.manifest().len() - 1;
    let act = params.manifest()[last].activation;
    let y_last = &trace.output;
    let g = activation_backward(act, &trace.pre[last], y_last, grad_output);
    backward_from_pre(params, trace, g, want_input_grad)
}

/// Backpropagation starting from the gradient w.r.t. the final pre-activation.
pub(crate) fn backward_from_pre(
    params: &FlatParams,
    trace: &ForwardTrace,
    mut grad_pre: Matrix,
    want_input_grad: bool,
) -> Result<(Gradients, Option<Matrix>)> {
    let n = params.manifest().len();
    let mut grads = Gradients::zeros(params.d());
    let mut input_grad = None;
    for k in (0..n).rev() {
        let spec = params.manifest()[k];
        let x = &trace.layer_inputs[k];
        let b = x.rows();
        let range = params.layer_range(k);
        {
            let (gw, gb) = grads.values[range].split_at_mut(spec.in_dim * spec.out_dim);
            matmul_atb_acc(
                grad_pre.as_slice(),
                x.as_slice(),
                b,
                spec.out_dim,
                spec.in_dim,
                gw,
            );
            for row in grad_pre.iter_rows() {
                for (acc, v) in gb.iter_mut().zip(row) {
                    *acc += v;
                }
            }
        }
        if k == 0 && !want_input_grad {
            break;
        }
        let mut gx = Matrix::zeros(b, spec.in_dim);
        matmul_ab(
            grad_pre.as_slice(),
            params.layer(k).weights,
            b,
            spec.out_dim,
            spec.in_dim,
            gx.as_mut_slice(),
        );
        if !gx.all_finite() {
            return Err(Error::NonFinite {
                layer: k,
                stage: "backward",
            });
        }
        if k == 0 {
            input_grad = Some(gx);
        } else {
            let prev = params.manifest()[k - 1].activation;
            grad_pre = activation_backward(prev, &trace.pre[k - 1], x, &gx);
        }
    }
    if !grads.all_finite() {
        return Err(Error::NonFinite {
            layer: 0,
            stage: "gradient",
        });
    }
    Ok((grads, input_grad))
}

/// Mean cross-entropy over the batch and its gradient w.r.t. the final
/// pre-activation (logits), computed with a max-shifted log-softmax.
pub fn cross_entropy_grad(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    let b = logits.rows();
    if b == 0 {
        return Err(Error::Empty("batch"));
    }
    let c = logits.cols();
    let mut grad = Matrix::zeros(b, c);
    let mut loss = 0.0;
    for (i, &y) in labels.iter().enumerate().take(b) {
        if y >= c {
            return Err(Error::Shape {
                context: "class label",
                expected: c,
                actual: y,
            });
        }
        let row = logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - row[y];
        let g = grad.row_mut(i);
        for (j, gv) in g.iter_mut().enumerate() {
            *gv = (row[j] - lse).exp() / b as f64;
        }
        g[y] -= 1.0 / b as f64;
    }
    Ok((loss / b as f64, grad))
}

/// Mean squared error over every output element, and its gradient w.r.t. the output.
fn mse_output_grad(output: &Matrix, targets: &Matrix) -> Result<(f64, Matrix)> {
    if output.rows() != targets.rows() || output.cols() != targets.cols() {
        return Err(Error::Shape {
            context: "mse targets",
            expected: output.rows() * output.cols(),
            actual: targets.rows() * targets.cols(),
        });
    }
    let n = (output.rows() * output.cols()) as f64;
    let mut grad = Matrix::zeros(output.rows(), output.cols());
    let mut loss = 0.0;
    for ((g, o), t) in grad
        .as_mut_slice()
        .iter_mut()
        .zip(output.as_slice())
        .zip(targets.as_slice())
    {
        let diff = o - t;
        loss += diff * diff;
        *g = 2.0 * diff / n;
    }
    Ok((loss / n, grad))
}

pub fn mse_loss_and_grad(
    params: &FlatParams,
    inputs: &Matrix,
    targets: &Matrix,
) -> Result<(f64, Gradients)> {
    if inputs.rows() == 0 {
        return Err(Error::Empty("batch"));
    }
    let trace = forward_trace(params, inputs)?;
    let (loss, g) = mse_output_grad(&trace.output, targets)?;
    let (grads, _) = backward(params, &trace, &g, false)?;
    Ok((loss, grads))
}

/// Batch-mean loss and parameter gradient.
///
/// Cross-entropy is taken against the final layer's logits, so it requires a
/// softmax (or identity) output layer. MSE compares the network output with
/// one-hot encodings of the labels.
pub fn loss_and_grad(
    params: &FlatParams,
    batch: &Batch,
    kind: LossKind,
) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    match kind {
        LossKind::CrossEntropy => {
            let last = params.manifest().len() - 1;
            match params.manifest()[last].activation {
                Activation::Softmax | Activation::Identity => {}
                _ => {
                    return Err(Error::ManifestMismatch(
                        "cross-entropy needs a softmax or identity output layer".into(),
                    ))
                }
            }
            let trace = forward_trace(params, &batch.inputs)?;
            let (loss, g) = cross_entropy_grad(&trace.pre[last], &batch.labels)?;
            let (grads, _) = backward_from_pre(params, &trace, g, false)?;
            Ok((loss, grads))
        }
        LossKind::Mse => {
            let c = params.out_dim();
            let mut t = Matrix::zeros(batch.len(), c);
            for (i, &y) in batch.labels.iter().enumerate() {
                if y >= c {
                    return Err(Error::Shape {
                        context: "class label",
                        expected: c,
                        actual: y,
                    });
                }
                t.row_mut(i)[y] = 1.0;
            }
            mse_loss_and_grad(params, &batch.inputs, &t)
        }
    }
}

pub fn mse_vec(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape {
            context: "mse_vec",
            expected: a.len(),
            actual: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::Empty("mse_vec"));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{chain, LayerSpec};
    use crate::seed;
    use rand::Rng;

    fn identity_layer(n: usize) -> FlatParams {
        let mut v = vec![0.0; n * n + n];
        for i in 0..n {
            v[i * n + i] = 1.0;
        }
        FlatParams::new(vec![LayerSpec::new(n, n, Activation::Identity)], v).unwrap()
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let x = Matrix::from_rows(&[[0.3, -1.5, 2.0]]);
        assert_eq!(forward(&identity_layer(3), &x).unwrap(), x);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let p =
            FlatParams::init(chain(&[4, 6, 5], Activation::Relu, Activation::Softmax), 9).unwrap();
        let x = Matrix::from_rows(&[[1.0, -2.0, 30.0, 0.5], [0.0, 0.0, 0.0, 0.0]]);
        let y = forward(&p, &x).unwrap();
        for r in y.iter_rows() {
            assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(r.iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn hand_evaluated_two_layer_relu() {
        // W1 = [[1,-1],[2,0.5]], b1 = [0.5,-1]; W2 = [[1,-2]], b2 = [0.25]
        // x = [2,3]: z1 = [2-3+0.5, 4+1.5-1] = [-0.5, 4.5] → relu [0, 4.5]
        // z2 = 0 - 9 + 0.25 = -8.75
        let m = vec![
            LayerSpec::new(2, 2, Activation::Relu),
            LayerSpec::new(2, 1, Activation::Identity),
        ];
        let p = FlatParams::new(m, vec![1.0, -1.0, 2.0, 0.5, 0.5, -1.0, 1.0, -2.0, 0.25]).unwrap();
        let y = forward(&p, &Matrix::from_rows(&[[2.0, 3.0]])).unwrap();
        assert_eq!(y.as_slice(), &[-8.75]);
    }

    #[test]
    fn input_width_mismatch_names_dims() {
        let p = identity_layer(3);
        let err = forward(&p, &Matrix::zeros(1, 2)).unwrap_err();
        assert!(matches!(
            err,
            Error::Shape {
                expected: 3,
                actual: 2,
                ..
            }
        ));
    }

    #[test]
    fn mse_zero_at_target() {
        let p = identity_layer(3);
        let batch = Batch::new(Matrix::from_rows(&[[0.0, 1.0, 0.0]]), vec![1]).unwrap();
        let (loss, g) = loss_and_grad(&p, &batch, LossKind::Mse).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn uniform_softmax_cross_entropy_is_ln_c() {
        let c = 7;
        let p = FlatParams::zeros(vec![LayerSpec::new(3, c, Activation::Softmax)]).unwrap();
        let batch = Batch::new(
            Matrix::from_rows(&[[0.1, 0.2, 0.3], [1.0, 0.0, -1.0]]),
            vec![0, 5],
        )
        .unwrap();
        let (loss, _) = loss_and_grad(&p, &batch, LossKind::CrossEntropy).unwrap();
        assert!((loss - (c as f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn non_finite_forward_names_layer() {
        let m = chain(&[2, 2, 2], Activation::Identity, Activation::Identity);
        let mut p = FlatParams::init(m, 1).unwrap();
        p.values_mut()[7] = f64::MAX;
        let x = Matrix::from_rows(&[[1e300, 1e300]]);
        match forward(&p, &x) {
            Err(Error::NonFinite { layer, .. }) => assert!(layer <= 1),
            other => panic!("expected non-finite error, got {other:?}"),
        }
    }

    #[test]
    fn mse_vec_values() {
        assert_eq!(mse_vec(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse_vec(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert!((mse_vec(&[1.0, 2.0, 3.0], &[0.0; 3]).unwrap() - 14.0 / 3.0).abs() < 1e-15);
        assert!(mse_vec(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn forward_is_bitwise_deterministic() {
        let p =
            FlatParams::init(chain(&[5, 8, 3], Activation::Tanh, Activation::Softmax), 2).unwrap();
        let mut rng = seed::stream(1, "t", &[]);
        let x = Matrix::from_vec(4, 5, (0..20).map(|_| rng.gen::<f64>()).collect()).unwrap();
        let a = forward(&p, &x).unwrap();
        let b = forward(&p, &x).unwrap();
        assert!(a
            .as_slice()
            .iter()
            .zip(b.as_slice())
            .all(|(u, v)| u.to_bits() == v.to_bits()));
    }
}
