//! Linear one-vs-rest SVM trained with Pegasos-style subgradient descent.
//!
//! The bias is learned as the weight of a constant 1 input, so it shares the
//! `1/(lambda t)` step and the L2 shrinkage with the other weights.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::forest::tree_seeds;
use super::matrix::{softmax, Matrix};
use super::FitLog;
use crate::flowdata::NUM_CLASSES;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmConfig {
    pub lambda: f64,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl SvmParams {
    pub fn margins(&self, x: &[f64]) -> [f64; NUM_CLASSES] {
        let mut m = [0.0; NUM_CLASSES];
        for (c, v) in m.iter_mut().enumerate() {
            *v = self.bias[c] + self.weights[c].iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>();
        }
        m
    }

    /// Softmax over the class margins. This is a monotone surrogate, not a
    /// calibrated probability.
    pub fn proba(&self, x: &[f64]) -> [f64; NUM_CLASSES] {
        softmax(&self.margins(x))
    }

    /// Mean hinge loss of the one-vs-rest problem for `class`.
    pub fn mean_hinge(&self, x: &Matrix, y: &[u8], class: usize) -> f64 {
        let total: f64 = (0..x.rows())
            .map(|i| {
                let sign = if y[i] as usize == class { 1.0 } else { -1.0 };
                (1.0 - sign * self.margins(x.row(i))[class]).max(0.0)
            })
            .sum();
        total / x.rows() as f64
    }
}

pub(crate) fn fit(x: &Matrix, y: &[u8], cfg: &SvmConfig, seed: u64, log: &mut FitLog) -> SvmParams {
    let n = x.rows();
    let d = x.cols();
    let lambda = cfg.lambda;
    let radius = 1.0 / lambda.sqrt();
    let mut weights = vec![vec![0.0; d]; NUM_CLASSES];
    let mut bias = vec![0.0; NUM_CLASSES];
    let seeds = tree_seeds(seed, NUM_CLASSES);

    for c in 0..NUM_CLASSES {
        let mut rng = ChaCha8Rng::seed_from_u64(seeds[c]);
        let mut order: Vec<usize> = (0..n).collect();
        // w[..d] are the feature weights, w[d] the bias
        let mut w = vec![0.0; d + 1];
        let mut t = 0usize;
        for epoch in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for &i in &order {
                t += 1;
                let eta = 1.0 / (lambda * t as f64);
                let row = x.row(i);
                let sign = if y[i] as usize == c { 1.0 } else { -1.0 };
                let margin = sign * (w[d] + w[..d].iter().zip(row).map(|(a, b)| a * b).sum::<f64>());
                let shrink = 1.0 - eta * lambda;
                w.iter_mut().for_each(|v| *v *= shrink);
                if margin < 1.0 {
                    for (v, xi) in w[..d].iter_mut().zip(row) {
                        *v += eta * sign * xi;
                    }
                    w[d] += eta * sign;
                }
                let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > radius {
                    let s = radius / norm;
                    w.iter_mut().for_each(|v| *v *= s);
                }
            }
            let hinge: f64 = (0..n)
                .map(|i| {
                    let sign = if y[i] as usize == c { 1.0 } else { -1.0 };
                    let m = w[d] + w[..d].iter().zip(x.row(i)).map(|(a, b)| a * b).sum::<f64>();
                    (1.0 - sign * m).max(0.0)
                })
                .sum::<f64>()
                / n as f64;
            let reg = 0.5 * lambda * w.iter().map(|v| v * v).sum::<f64>();
            log.record(c * cfg.epochs + epoch, reg + hinge);
        }
        bias[c] = w[d];
        w.truncate(d);
        weights[c] = w;
    }
    SvmParams { weights, bias }
}
