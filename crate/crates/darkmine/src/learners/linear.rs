//! Logistic regression and linear SVM trained by deterministic epoch-wise
//! stochastic (sub)gradient descent with a seeded shuffle and averaged
//! weights.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datamodel::Label;
use crate::textpipe::SparseVector;

/// Weight vector plus bias for either linear family. `loss_history` records
/// the full objective on the live weights at the end of each epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearParams {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub loss_history: Vec<f64>,
}

impl LinearParams {
    pub fn margin(&self, x: &SparseVector) -> f64 {
        let mut m = self.bias;
        for &(idx, w) in x.entries() {
            m += self.weights[idx] * w;
        }
        m
    }

    /// Logistic squashing of the margin: P(RELEVANT | x).
    pub fn confidence(&self, x: &SparseVector) -> f64 {
        sigmoid(self.margin(x))
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Numerically stable ln(1 + e^z).
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn target(label: Label) -> f64 {
    if label == Label::Relevant {
        1.0
    } else {
        0.0
    }
}

fn sample_weight(label: Label, pos_weight: f64) -> f64 {
    if label == Label::Relevant {
        pos_weight
    } else {
        1.0
    }
}

fn sparse_dot(dense: &[f64], x: &SparseVector) -> f64 {
    x.entries().iter().map(|&(idx, w)| dense[idx] * w).sum()
}

/// Mean weighted cross-entropy plus (l2/2)·||w||²; the bias is unpenalized.
pub fn logistic_loss(
    x: &[SparseVector],
    y: &[Label],
    weights: &[f64],
    bias: f64,
    l2_lambda: f64,
    pos_weight: f64,
) -> f64 {
    let n = x.len() as f64;
    let mut loss = 0.0;
    for (xi, yi) in x.iter().zip(y) {
        let m = sparse_dot(weights, xi) + bias;
        let ce = if target(*yi) == 1.0 { softplus(-m) } else { softplus(m) };
        loss += sample_weight(*yi, pos_weight) * ce;
    }
    loss / n + 0.5 * l2_lambda * weights.iter().map(|w| w * w).sum::<f64>()
}

/// Full-batch gradient of `logistic_loss` with respect to (weights, bias).
pub fn logistic_gradient(
    x: &[SparseVector],
    y: &[Label],
    weights: &[f64],
    bias: f64,
    l2_lambda: f64,
    pos_weight: f64,
) -> (Vec<f64>, f64) {
    let n = x.len() as f64;
    let mut grad = vec![0.0f64; weights.len()];
    let mut grad_bias = 0.0;
    for (xi, yi) in x.iter().zip(y) {
        let m = sparse_dot(weights, xi) + bias;
        let g = sample_weight(*yi, pos_weight) * (sigmoid(m) - target(*yi));
        for &(idx, w) in xi.entries() {
            grad[idx] += g * w;
        }
        grad_bias += g;
    }
    for v in grad.iter_mut() {
        *v /= n;
    }
    for (gw, w) in grad.iter_mut().zip(weights) {
        *gw += l2_lambda * w;
    }
    (grad, grad_bias / n)
}

/// Scaled weight vector: the effective weights are `scale * values`, so the
/// L2 shrink step touches one scalar instead of the whole dimension.
struct ScaledVec {
    values: Vec<f64>,
    scale: f64,
}

impl ScaledVec {
    fn zeros(dim: usize) -> Self {
        ScaledVec { values: vec![0.0; dim], scale: 1.0 }
    }

    fn dot(&self, x: &SparseVector) -> f64 {
        self.scale * sparse_dot(&self.values, x)
    }

    fn shrink(&mut self, factor: f64) {
        if factor == 0.0 {
            self.values.iter_mut().for_each(|v| *v = 0.0);
            self.scale = 1.0;
            return;
        }
        self.scale *= factor;
        if self.scale.abs() < 1e-12 {
            for v in &mut self.values {
                *v *= self.scale;
            }
            self.scale = 1.0;
        }
    }

    fn add_sparse(&mut self, coef: f64, x: &SparseVector) {
        let adjusted = coef / self.scale;
        for &(idx, w) in x.entries() {
            self.values[idx] += adjusted * w;
        }
    }

    fn materialize(&self) -> Vec<f64> {
        self.values.iter().map(|v| v * self.scale).collect()
    }
}

pub(super) fn train_logistic(
    x: &[SparseVector],
    y: &[Label],
    l2_lambda: f64,
    max_epochs: usize,
    learning_rate: f64,
    pos_weight: f64,
    seed: u64,
) -> LinearParams {
    let dim = x[0].dimension();
    let n = x.len();
    let shrink = 1.0 - learning_rate * l2_lambda;

    let mut w = ScaledVec::zeros(dim);
    let mut bias = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut avg_weights = vec![0.0f64; dim];
    let mut avg_bias = 0.0f64;
    let mut loss_history = Vec::with_capacity(max_epochs);

    for _ in 0..max_epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let m = w.dot(&x[i]) + bias;
            let g = sample_weight(y[i], pos_weight) * (sigmoid(m) - target(y[i]));
            w.shrink(shrink.max(0.0));
            w.add_sparse(-learning_rate * g, &x[i]);
            bias -= learning_rate * g;
        }
        let live = w.materialize();
        loss_history.push(logistic_loss(x, y, &live, bias, l2_lambda, pos_weight));
        for (a, v) in avg_weights.iter_mut().zip(&live) {
            *a += v;
        }
        avg_bias += bias;
    }

    let epochs = max_epochs as f64;
    LinearParams {
        weights: avg_weights.into_iter().map(|v| v / epochs).collect(),
        bias: avg_bias / epochs,
        loss_history,
    }
}

fn sign(label: Label) -> f64 {
    if label == Label::Relevant {
        1.0
    } else {
        -1.0
    }
}

/// Mean weighted hinge loss plus (lambda/2)·||w||².
fn svm_objective(
    x: &[SparseVector],
    y: &[Label],
    weights: &[f64],
    bias: f64,
    lambda: f64,
    pos_weight: f64,
) -> f64 {
    let n = x.len() as f64;
    let mut hinge = 0.0;
    for (xi, yi) in x.iter().zip(y) {
        let m = sparse_dot(weights, xi) + bias;
        hinge += sample_weight(*yi, pos_weight) * (1.0 - sign(*yi) * m).max(0.0);
    }
    let reg: f64 = weights.iter().map(|w| w * w).sum::<f64>() + bias * bias;
    hinge / n + 0.5 * lambda * reg
}

/// Pegasos-style subgradient descent on the hinge objective with
/// lambda = 1 / (C·n) and step 1/(lambda·t). The bias rides along as an
/// augmented constant feature, so it is regularized too.
pub(super) fn train_svm(
    x: &[SparseVector],
    y: &[Label],
    c: f64,
    max_epochs: usize,
    pos_weight: f64,
    seed: u64,
) -> LinearParams {
    let dim = x[0].dimension();
    let n = x.len();
    let lambda = 1.0 / (c * n as f64);

    // values[dim] is the bias coordinate.
    let mut w = ScaledVec::zeros(dim + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut avg = vec![0.0f64; dim + 1];
    let mut loss_history = Vec::with_capacity(max_epochs);
    let mut t: u64 = 0;

    for _ in 0..max_epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let margin = w.dot(&x[i]) + w.scale * w.values[dim];
            let violated = sign(y[i]) * margin < 1.0;
            w.shrink(1.0 - 1.0 / t as f64);
            if violated {
                let coef = eta * sign(y[i]) * sample_weight(y[i], pos_weight);
                w.add_sparse(coef, &x[i]);
                w.values[dim] += coef / w.scale;
            }
        }
        let live = w.materialize();
        loss_history.push(svm_objective(x, y, &live[..dim], live[dim], lambda, pos_weight));
        for (a, v) in avg.iter_mut().zip(&live) {
            *a += v;
        }
    }

    let epochs = max_epochs as f64;
    let mut averaged: Vec<f64> = avg.into_iter().map(|v| v / epochs).collect();
    let bias = averaged.pop().unwrap();
    LinearParams { weights: averaged, bias, loss_history }
}
