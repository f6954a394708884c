//! Analytic gradients against central finite differences.

use fedweigh::nn::{self, Activation, Batch, FlatParams, LayerSpec, LossKind, Matrix};
use fedweigh::seed;
use rand::Rng;

const EPS: f64 = 1e-4;

fn numeric_grad(f: impl Fn(&FlatParams) -> f64, p: &FlatParams) -> Vec<f64> {
    (0..p.d())
        .map(|i| {
            let mut plus = p.clone();
            plus.values_mut()[i] += EPS;
            let mut minus = p.clone();
            minus.values_mut()[i] -= EPS;
            (f(&plus) - f(&minus)) / (2.0 * EPS)
        })
        .collect()
}

fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| {
            let scale = a.abs().max(n.abs());
            if scale < 1e-7 {
                0.0
            } else {
                (a - n).abs() / scale
            }
        })
        .fold(0.0, f64::max)
}

fn random_net(seed: u64) -> (FlatParams, Batch) {
    let mut rng = seed::stream(seed, "gradcheck", &[]);
    let in_dim = rng.gen_range(2..8);
    let hidden = rng.gen_range(2..12);
    let classes = rng.gen_range(2..6);
    let hidden_act = if seed.is_multiple_of(2) {
        Activation::Tanh
    } else {
        Activation::Relu
    };
    let mut manifest = vec![
        LayerSpec::new(in_dim, hidden, hidden_act),
        LayerSpec::new(hidden, classes, Activation::Softmax),
    ];
    if seed.is_multiple_of(3) {
        manifest.insert(1, LayerSpec::new(hidden, hidden, Activation::Tanh));
        manifest[2].in_dim = hidden;
    }
    let mut p = FlatParams::init(manifest, seed).unwrap();
    for v in p.values_mut() {
        *v += rng.gen_range(-0.1..0.1);
    }
    assert!(p.d() <= 500, "net has {} params", p.d());
    let b = rng.gen_range(1..6);
    let x = Matrix::from_vec(
        b,
        in_dim,
        (0..b * in_dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
    .unwrap();
    let labels = (0..b).map(|_| rng.gen_range(0..classes)).collect();
    (p, Batch::new(x, labels).unwrap())
}

#[test]
fn cross_entropy_gradients_match_finite_differences() {
    for s in 0..20 {
        let (p, batch) = random_net(s);
        let (_, g) = nn::loss_and_grad(&p, &batch, LossKind::CrossEntropy).unwrap();
        let num = numeric_grad(
            |q| {
                nn::loss_and_grad(q, &batch, LossKind::CrossEntropy)
                    .unwrap()
                    .0
            },
            &p,
        );
        let err = max_rel_err(&g.values, &num);
        assert!(err < 1e-4, "seed {s}: relative error {err}");
    }
}

#[test]
fn mse_gradients_match_finite_differences() {
    for s in 0..20 {
        let (p, batch) = random_net(100 + s);
        let (_, g) = nn::loss_and_grad(&p, &batch, LossKind::Mse).unwrap();
        let num = numeric_grad(
            |q| nn::loss_and_grad(q, &batch, LossKind::Mse).unwrap().0,
            &p,
        );
        let err = max_rel_err(&g.values, &num);
        assert!(err < 1e-4, "seed {s}: relative error {err}");
    }
}

#[test]
fn input_gradient_matches_finite_differences() {
    // d/dx of Σ_j c_j·y_j for a tanh/identity regression net.
    let manifest = nn::chain(&[4, 6, 3], Activation::Tanh, Activation::Identity);
    let p = FlatParams::init(manifest, 11).unwrap();
    let c = [0.5, -1.0, 2.0];
    let x = Matrix::from_rows(&[[0.1, -0.4, 0.7, 0.2]]);
    let trace = nn::forward_trace(&p, &x).unwrap();
    let upstream = Matrix::from_rows(&[c]);
    let (_, gx) = nn::backward(&p, &trace, &upstream, true).unwrap();
    let gx = gx.unwrap();
    let f = |x: &Matrix| {
        let y = nn::forward(&p, x).unwrap();
        y.row(0).iter().zip(&c).map(|(a, b)| a * b).sum::<f64>()
    };
    for i in 0..4 {
        let mut plus = x.clone();
        plus.row_mut(0)[i] += EPS;
        let mut minus = x.clone();
        minus.row_mut(0)[i] -= EPS;
        let num = (f(&plus) - f(&minus)) / (2.0 * EPS);
        assert!((num - gx.get(0, i)).abs() < 1e-8 * num.abs().max(1.0));
    }
}

#[test]
fn softmax_output_backward_matches_finite_differences() {
    // Arbitrary upstream gradient through a softmax output layer.
    let manifest = nn::chain(&[3, 5, 4], Activation::Relu, Activation::Softmax);
    let p = FlatParams::init(manifest, 4).unwrap();
    let x = Matrix::from_rows(&[[0.3, -0.2, 0.9], [0.5, 0.5, -0.1]]);
    let up = Matrix::from_rows(&[[1.0, -2.0, 0.5, 0.0], [0.3, 0.3, -1.0, 2.0]]);
    let f = |q: &FlatParams| {
        let y = nn::forward(q, &x).unwrap();
        y.as_slice()
            .iter()
            .zip(up.as_slice())
            .map(|(a, b)| a * b)
            .sum::<f64>()
    };
    let trace = nn::forward_trace(&p, &x).unwrap();
    let (g, _) = nn::backward(&p, &trace, &up, false).unwrap();
    let num = numeric_grad(f, &p);
    assert!(max_rel_err(&g.values, &num) < 1e-4);
}
