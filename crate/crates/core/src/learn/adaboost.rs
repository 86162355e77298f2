//! SAMME multi-class AdaBoost over depth-1 Gini stumps.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::matrix::{argmax, normalize, Matrix};
use super::tree::{grow, Gini, GrowParams, SortedColumns, Tree};
use super::FitLog;
use crate::flowdata::NUM_CLASSES;

/// Weighted error is clamped into `[ERR_FLOOR, 1 - ERR_FLOOR]` before the
/// stage weight is taken, which caps `ln((1-err)/err)` at about `ln(1e10)`.
pub const ERR_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaBoostParams {
    pub stumps: Vec<Tree>,
    pub alphas: Vec<f64>,
    /// Weighted training error of each accepted stump.
    pub errors: Vec<f64>,
}

fn stump_class(t: &Tree, x: &[f64]) -> usize {
    argmax(t.leaf_value(x))
}

impl AdaBoostParams {
    /// Stage-weighted vote fractions.
    pub fn proba(&self, x: &[f64]) -> [f64; NUM_CLASSES] {
        let mut p = [0.0; NUM_CLASSES];
        for (t, a) in self.stumps.iter().zip(&self.alphas) {
            p[stump_class(t, x)] += a;
        }
        normalize(&mut p);
        p
    }
}

pub(crate) fn fit(x: &Matrix, y: &[u8], rounds: usize, log: &mut FitLog) -> AdaBoostParams {
    let n = x.rows();
    let k = NUM_CLASSES as f64;
    let sorted = SortedColumns::new(x);
    let params = GrowParams {
        max_depth: 1,
        min_samples_leaf: 1,
        max_features: None,
        min_gain: 0.0,
    };
    let mut weights = vec![1.0 / n as f64; n];
    let mut out = AdaBoostParams {
        stumps: Vec::new(),
        alphas: Vec::new(),
        errors: Vec::new(),
    };
    for round in 0..rounds {
        let crit = Gini { labels: y, weights: &weights };
        let stump = grow::<_, ChaCha8Rng>(x, &sorted, None, &crit, &params, None);
        let miss: Vec<bool> = (0..n).map(|i| stump_class(&stump, x.row(i)) != y[i] as usize).collect();
        let total: f64 = weights.iter().sum();
        let err = weights.iter().zip(&miss).filter(|(_, &m)| m).map(|(w, _)| w).sum::<f64>() / total;
        log.record(round, err);
        if err >= (k - 1.0) / k {
            // no better than chance under SAMME: reject and stop
            break;
        }
        let clamped = err.clamp(ERR_FLOOR, 1.0 - ERR_FLOOR);
        let alpha = ((1.0 - clamped) / clamped).ln() + (k - 1.0).ln();
        out.stumps.push(stump);
        out.alphas.push(alpha);
        out.errors.push(err);
        if err == 0.0 {
            break;
        }
        for (w, &m) in weights.iter_mut().zip(&miss) {
            if m {
                *w *= alpha.exp();
            }
        }
        let s: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= s);
    }
    out
}
