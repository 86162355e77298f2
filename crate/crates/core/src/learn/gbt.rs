//! Softmax gradient boosting with second-order (Newton) leaf weights.

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::matrix::{softmax, Matrix};
use super::tree::{grow, GradientGain, GrowParams, SortedColumns, Tree};
use super::FitLog;
use crate::flowdata::NUM_CLASSES;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GbtConfig {
    pub rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub lambda: f64,
    pub min_child_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtParams {
    /// Log class priors of the training set (`-inf` for absent classes).
    pub init_scores: Vec<f64>,
    pub learning_rate: f64,
    /// `rounds[r][c]` is the regression tree for class `c` in round `r`.
    pub rounds: Vec<Vec<Tree>>,
}

impl GbtParams {
    pub fn scores(&self, x: &[f64]) -> [f64; NUM_CLASSES] {
        let mut s = [0.0; NUM_CLASSES];
        s.copy_from_slice(&self.init_scores[..NUM_CLASSES]);
        for round in &self.rounds {
            for (c, t) in round.iter().enumerate() {
                s[c] += self.learning_rate * t.leaf_value(x)[0];
            }
        }
        s
    }

    pub fn proba(&self, x: &[f64]) -> [f64; NUM_CLASSES] {
        softmax(&self.scores(x))
    }
}

fn log_loss(scores: &[[f64; NUM_CLASSES]], y: &[u8]) -> f64 {
    let total: f64 = scores
        .iter()
        .zip(y)
        .map(|(s, &c)| -softmax(s)[c as usize].max(f64::MIN_POSITIVE).ln())
        .sum();
    total / y.len() as f64
}

pub(crate) fn fit(x: &Matrix, y: &[u8], cfg: &GbtConfig, log: &mut FitLog) -> GbtParams {
    let n = x.rows();
    let mut counts = [0usize; NUM_CLASSES];
    for &c in y {
        counts[c as usize] += 1;
    }
    let init: Vec<f64> = counts
        .iter()
        .map(|&k| if k == 0 { f64::NEG_INFINITY } else { (k as f64 / n as f64).ln() })
        .collect();
    let mut scores: Vec<[f64; NUM_CLASSES]> = vec![[init[0], init[1], init[2], init[3]]; n];
    let sorted = SortedColumns::new(x);
    let params = GrowParams {
        max_depth: cfg.max_depth,
        min_samples_leaf: 1,
        max_features: None,
        min_gain: 1e-12,
    };
    log.record(0, log_loss(&scores, y));

    let mut rounds = Vec::with_capacity(cfg.rounds);
    for r in 0..cfg.rounds {
        let probs: Vec<[f64; NUM_CLASSES]> = scores.iter().map(softmax).collect();
        let trees: Vec<Tree> = (0..NUM_CLASSES)
            .into_par_iter()
            .map(|c| {
                let grad: Vec<f64> = probs
                    .iter()
                    .zip(y)
                    .map(|(p, &yi)| p[c] - if yi as usize == c { 1.0 } else { 0.0 })
                    .collect();
                let hess: Vec<f64> = probs.iter().map(|p| (p[c] * (1.0 - p[c])).max(1e-16)).collect();
                let crit = GradientGain {
                    grad: &grad,
                    hess: &hess,
                    lambda: cfg.lambda,
                    min_child_weight: cfg.min_child_weight,
                };
                grow::<_, ChaCha8Rng>(x, &sorted, None, &crit, &params, None)
            })
            .collect();
        for (i, s) in scores.iter_mut().enumerate() {
            for (c, t) in trees.iter().enumerate() {
                s[c] += cfg.learning_rate * t.leaf_value(x.row(i))[0];
            }
        }
        rounds.push(trees);
        log.record(r + 1, log_loss(&scores, y));
    }
    GbtParams {
        init_scores: init,
        learning_rate: cfg.learning_rate,
        rounds,
    }
}
