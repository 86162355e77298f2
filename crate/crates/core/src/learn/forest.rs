//! CART decision trees and random forests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::matrix::{normalize, Matrix};
use super::tree::{grow, Gini, GrowParams, SortedColumns, Tree};
use crate::flowdata::NUM_CLASSES;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeConfig {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub min_impurity_decrease: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestConfig {
    pub trees: usize,
    pub tree: TreeConfig,
    pub bootstrap: bool,
    /// Features examined per split; `None` examines all of them.
    pub max_features: Option<usize>,
}

/// Leaf class distribution of a single tree.
pub fn tree_proba(t: &Tree, x: &[f64]) -> [f64; NUM_CLASSES] {
    let v = t.leaf_value(x);
    let mut p = [0.0; NUM_CLASSES];
    p.copy_from_slice(&v[..NUM_CLASSES]);
    p
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub trees: Vec<Tree>,
}

impl ForestParams {
    /// Mean of the per-tree leaf distributions.
    pub fn proba(&self, x: &[f64]) -> [f64; NUM_CLASSES] {
        let mut p = [0.0; NUM_CLASSES];
        for t in &self.trees {
            for (acc, v) in p.iter_mut().zip(t.leaf_value(x)) {
                *acc += v;
            }
        }
        let n = self.trees.len() as f64;
        p.iter_mut().for_each(|v| *v /= n);
        normalize(&mut p);
        p
    }
}

/// SplitMix64 step: advances `state` and returns the mixed output.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The seed of tree `i` is the `(i+1)`-th SplitMix64 output from the
/// master seed.
pub fn tree_seeds(master: u64, n: usize) -> Vec<u64> {
    let mut state = master;
    (0..n).map(|_| splitmix64(&mut state)).collect()
}

pub(crate) fn fit_tree(x: &Matrix, y: &[u8], cfg: &TreeConfig) -> Tree {
    let weights = vec![1.0; x.rows()];
    let crit = Gini { labels: y, weights: &weights };
    let params = GrowParams {
        max_depth: cfg.max_depth,
        min_samples_leaf: cfg.min_samples_leaf,
        max_features: None,
        min_gain: cfg.min_impurity_decrease * x.rows() as f64,
    };
    grow::<_, ChaCha8Rng>(x, &SortedColumns::new(x), None, &crit, &params, None)
}

pub(crate) fn fit_forest(x: &Matrix, y: &[u8], cfg: &ForestConfig, seed: u64) -> ForestParams {
    let sorted = SortedColumns::new(x);
    let n = x.rows();
    let params = GrowParams {
        max_depth: cfg.tree.max_depth,
        min_samples_leaf: cfg.tree.min_samples_leaf,
        max_features: cfg.max_features,
        min_gain: cfg.tree.min_impurity_decrease * n as f64,
    };
    let trees = tree_seeds(seed, cfg.trees)
        .into_par_iter()
        .map(|tree_seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(tree_seed);
            let mut weights = vec![1.0; n];
            let mut mask = None;
            if cfg.bootstrap {
                weights.iter_mut().for_each(|w| *w = 0.0);
                for _ in 0..n {
                    weights[rng.random_range(0..n)] += 1.0;
                }
                mask = Some(weights.iter().map(|&w| w > 0.0).collect::<Vec<bool>>());
            }
            let crit = Gini { labels: y, weights: &weights };
            grow(x, &sorted, mask.as_deref(), &crit, &params, Some(&mut rng))
        })
        .collect();
    ForestParams { trees }
}
