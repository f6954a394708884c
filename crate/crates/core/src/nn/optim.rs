use super::{FlatParams, Gradients};
use crate::error::{Error, Result};

/// Plain gradient descent: `params − lr·grads`.
pub fn sgd_step(params: &FlatParams, grads: &Gradients, lr: f64) -> Result<FlatParams> {
    if grads.values.len() != params.d() {
        return Err(Error::Shape {
            context: "sgd gradient length",
            expected: params.d(),
            actual: grads.values.len(),
        });
    }
    let mut out = params.clone();
    for (p, g) in out.values_mut().iter_mut().zip(&grads.values) {
        *p -= lr * g;
    }
    Ok(out)
}

/// Adam optimizer state for one parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(d: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; d],
            v: vec![0.0; d],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
    }
}
