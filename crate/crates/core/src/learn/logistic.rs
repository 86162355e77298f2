//! Multinomial softmax regression trained by full-batch gradient descent.

use serde::{Deserialize, Serialize};

use super::matrix::{softmax, Matrix};
use super::FitLog;
use crate::flowdata::NUM_CLASSES;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticConfig {
    pub learning_rate: f64,
    pub l2: f64,
    pub max_epochs: usize,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    /// One weight row per class.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl LogisticParams {
    pub fn zeros(dim: usize) -> Self {
        Self {
            weights: vec![vec![0.0; dim]; NUM_CLASSES],
            bias: vec![0.0; NUM_CLASSES],
        }
    }

    pub fn scores(&self, x: &[f64]) -> [f64; NUM_CLASSES] {
        let mut s = [0.0; NUM_CLASSES];
        for (c, sc) in s.iter_mut().enumerate() {
            *sc = self.bias[c] + self.weights[c].iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
        s
    }

    pub fn proba(&self, x: &[f64]) -> [f64; NUM_CLASSES] {
        softmax(&self.scores(x))
    }
}

/// Mean softmax cross-entropy plus `l2/2 * ||W||^2` (bias unpenalized),
/// with its gradient `(dW, db)`.
pub fn softmax_loss_and_gradient(
    p: &LogisticParams,
    x: &Matrix,
    y: &[u8],
    l2: f64,
) -> (f64, Vec<Vec<f64>>, Vec<f64>) {
    let n = x.rows();
    let d = x.cols();
    let mut gw = vec![vec![0.0; d]; NUM_CLASSES];
    let mut gb = vec![0.0; NUM_CLASSES];
    let mut loss = 0.0;
    for i in 0..n {
        let row = x.row(i);
        let prob = p.proba(row);
        let yi = y[i] as usize;
        loss -= prob[yi].max(f64::MIN_POSITIVE).ln();
        for c in 0..NUM_CLASSES {
            let r = prob[c] - if c == yi { 1.0 } else { 0.0 };
            gb[c] += r;
            for (g, v) in gw[c].iter_mut().zip(row) {
                *g += r * v;
            }
        }
    }
    let inv = 1.0 / n as f64;
    loss *= inv;
    let mut penalty = 0.0;
    for c in 0..NUM_CLASSES {
        gb[c] *= inv;
        for (g, w) in gw[c].iter_mut().zip(&p.weights[c]) {
            *g = *g * inv + l2 * w;
            penalty += w * w;
        }
    }
    (loss + 0.5 * l2 * penalty, gw, gb)
}

/// Returns the parameters and whether the loss change fell below `tol`.
pub(crate) fn fit(x: &Matrix, y: &[u8], cfg: &LogisticConfig, log: &mut FitLog) -> (LogisticParams, bool) {
    let mut p = LogisticParams::zeros(x.cols());
    let mut prev = f64::INFINITY;
    for epoch in 0..cfg.max_epochs {
        let (loss, gw, gb) = softmax_loss_and_gradient(&p, x, y, cfg.l2);
        log.record(epoch, loss);
        if (prev - loss).abs() < cfg.tol {
            return (p, true);
        }
        prev = loss;
        for c in 0..NUM_CLASSES {
            p.bias[c] -= cfg.learning_rate * gb[c];
            for (w, g) in p.weights[c].iter_mut().zip(&gw[c]) {
                *w -= cfg.learning_rate * g;
            }
        }
    }
    (p, false)
}
