//! Binary split trees grown over presorted feature columns.
//!
//! One growing routine serves every tree-based estimator. What differs
//! between them is the [`Criterion`]: weighted Gini for the classification
//! trees (DT, RF, AdaBoost stumps) and the second-order gradient gain for
//! boosted regression trees. Each feature's row order is sorted once per
//! fit; growing a node stably partitions those orders instead of re-sorting.
//!
//! Candidate thresholds are midpoints between consecutive distinct values.
//! A row goes left when `x[feature] <= threshold`. Among equally good
//! splits the lowest feature index wins, then the lowest threshold.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::flowdata::NUM_CLASSES;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_value(&self, x: &[f64]) -> &[f64] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
                Node::Leaf { value } => return value,
            }
        }
    }

    pub fn root_split(&self) -> Option<(usize, f64)> {
        match self.nodes.first()? {
            Node::Split {
                feature, threshold, ..
            } => Some((*feature, *threshold)),
            Node::Leaf { .. } => None,
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &Tree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Split { left, right, .. } => 1 + walk(t, *left).max(walk(t, *right)),
                Node::Leaf { .. } => 0,
            }
        }
        walk(self, 0)
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

/// Node statistics and split scoring. A split's gain is
/// `score(left) + score(right) - score(parent)`.
pub(crate) trait Criterion {
    type Stats: Copy;
    fn empty(&self) -> Self::Stats;
    fn add(&self, s: &mut Self::Stats, row: usize);
    fn sub(&self, total: &Self::Stats, part: &Self::Stats) -> Self::Stats;
    fn score(&self, s: &Self::Stats) -> f64;
    fn is_pure(&self, s: &Self::Stats) -> bool;
    fn admissible(&self, left: &Self::Stats, right: &Self::Stats) -> bool;
    fn leaf(&self, s: &Self::Stats) -> Vec<f64>;
}

/// Weighted Gini impurity. `score = sum_c w_c^2 / W`, so the gain equals the
/// weighted impurity decrease `W*g(P) - W_L*g(L) - W_R*g(R)`.
pub(crate) struct Gini<'a> {
    pub labels: &'a [u8],
    pub weights: &'a [f64],
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ClassWeights {
    pub w: [f64; NUM_CLASSES],
    pub total: f64,
}

impl Criterion for Gini<'_> {
    type Stats = ClassWeights;

    fn empty(&self) -> ClassWeights {
        ClassWeights {
            w: [0.0; NUM_CLASSES],
            total: 0.0,
        }
    }

    #[inline]
    fn add(&self, s: &mut ClassWeights, row: usize) {
        let w = self.weights[row];
        s.w[self.labels[row] as usize] += w;
        s.total += w;
    }

    #[inline]
    fn sub(&self, total: &ClassWeights, part: &ClassWeights) -> ClassWeights {
        let mut out = *total;
        for c in 0..NUM_CLASSES {
            out.w[c] -= part.w[c];
        }
        out.total -= part.total;
        out
    }

    #[inline]
    fn score(&self, s: &ClassWeights) -> f64 {
        if s.total <= 0.0 {
            return 0.0;
        }
        s.w.iter().map(|w| w * w).sum::<f64>() / s.total
    }

    fn is_pure(&self, s: &ClassWeights) -> bool {
        s.w.iter().filter(|&&w| w > 0.0).count() <= 1
    }

    fn admissible(&self, _: &ClassWeights, _: &ClassWeights) -> bool {
        true
    }

    fn leaf(&self, s: &ClassWeights) -> Vec<f64> {
        if s.total > 0.0 {
            s.w.iter().map(|w| w / s.total).collect()
        } else {
            vec![1.0 / NUM_CLASSES as f64; NUM_CLASSES]
        }
    }
}

/// Gini impurity of a class-count vector.
pub fn gini(counts: &[f64]) -> f64 {
    let total: f64 = counts.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    1.0 - counts.iter().map(|c| (c / total) * (c / total)).sum::<f64>()
}

/// Second-order boosting criterion: `score = G^2 / (H + lambda)`, leaf
/// weight `-G / (H + lambda)`.
pub(crate) struct GradientGain<'a> {
    pub grad: &'a [f64],
    pub hess: &'a [f64],
    pub lambda: f64,
    pub min_child_weight: f64,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct GradSums {
    pub g: f64,
    pub h: f64,
}

impl Criterion for GradientGain<'_> {
    type Stats = GradSums;

    fn empty(&self) -> GradSums {
        GradSums { g: 0.0, h: 0.0 }
    }

    #[inline]
    fn add(&self, s: &mut GradSums, row: usize) {
        s.g += self.grad[row];
        s.h += self.hess[row];
    }

    #[inline]
    fn sub(&self, total: &GradSums, part: &GradSums) -> GradSums {
        GradSums {
            g: total.g - part.g,
            h: total.h - part.h,
        }
    }

    #[inline]
    fn score(&self, s: &GradSums) -> f64 {
        s.g * s.g / (s.h + self.lambda)
    }

    fn is_pure(&self, _: &GradSums) -> bool {
        false
    }

    fn admissible(&self, left: &GradSums, right: &GradSums) -> bool {
        left.h >= self.min_child_weight && right.h >= self.min_child_weight
    }

    fn leaf(&self, s: &GradSums) -> Vec<f64> {
        vec![-s.g / (s.h + self.lambda)]
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct GrowParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Features drawn per split; `None` examines all of them.
    pub max_features: Option<usize>,
    /// Best gain must reach this (up to rounding) for a node to split.
    pub min_gain: f64,
}

/// Row orders of every feature column, ascending by value then row index.
pub(crate) struct SortedColumns {
    orders: Vec<Vec<u32>>,
}

impl SortedColumns {
    pub fn new(x: &Matrix) -> Self {
        let orders = (0..x.cols())
            .map(|f| {
                let mut idx: Vec<u32> = (0..x.rows() as u32).collect();
                idx.sort_by(|&a, &b| {
                    x.get(a as usize, f)
                        .total_cmp(&x.get(b as usize, f))
                        .then(a.cmp(&b))
                });
                idx
            })
            .collect();
        Self { orders }
    }
}

struct Task<S> {
    node: usize,
    start: usize,
    end: usize,
    depth: usize,
    stats: S,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
    n_left: usize,
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) * 0.5;
    if m < b {
        m
    } else {
        a
    }
}

/// Grow one tree. Rows with `active[row] == false` are excluded.
pub(crate) fn grow<C: Criterion, R: Rng>(
    x: &Matrix,
    sorted: &SortedColumns,
    active: Option<&[bool]>,
    crit: &C,
    params: &GrowParams,
    mut rng: Option<&mut R>,
) -> Tree {
    let d = x.cols();
    let mut cols: Vec<Vec<u32>> = match active {
        Some(mask) => sorted
            .orders
            .iter()
            .map(|o| o.iter().copied().filter(|&r| mask[r as usize]).collect())
            .collect(),
        None => sorted.orders.clone(),
    };
    let n_active = cols.first().map_or(0, Vec::len);
    let mut goes_left = vec![false; x.rows()];
    let mut scratch: Vec<u32> = Vec::with_capacity(n_active);
    let mut feature_pool: Vec<usize> = (0..d).collect();

    let mut root = crit.empty();
    if let Some(c0) = cols.first() {
        for &r in c0 {
            crit.add(&mut root, r as usize);
        }
    }
    let mut nodes = vec![Node::Leaf { value: Vec::new() }];
    let mut stack = vec![Task {
        node: 0,
        start: 0,
        end: n_active,
        depth: 0,
        stats: root,
    }];

    while let Some(task) = stack.pop() {
        let len = task.end - task.start;
        let splittable = d > 0
            && task.depth < params.max_depth
            && len >= 2 * params.min_samples_leaf.max(1)
            && !crit.is_pure(&task.stats);
        let best = if splittable {
            let feats: Vec<usize> = match (params.max_features, rng.as_deref_mut()) {
                (Some(m), Some(rng)) if m < d => {
                    for i in 0..m {
                        let j = rng.random_range(i..d);
                        feature_pool.swap(i, j);
                    }
                    let mut f = feature_pool[..m].to_vec();
                    f.sort_unstable();
                    f
                }
                _ => (0..d).collect(),
            };
            best_split(x, &cols, &task, &feats, crit, params)
        } else {
            None
        };

        let Some(best) = best else {
            nodes[task.node] = Node::Leaf {
                value: crit.leaf(&task.stats),
            };
            continue;
        };

        let (start, end, mid) = (task.start, task.end, task.start + best.n_left);
        for (i, &r) in cols[best.feature][start..end].iter().enumerate() {
            goes_left[r as usize] = i < best.n_left;
        }
        for col in cols.iter_mut() {
            scratch.clear();
            let seg = &mut col[start..end];
            let mut w = 0;
            for k in 0..seg.len() {
                let r = seg[k];
                if goes_left[r as usize] {
                    seg[w] = r;
                    w += 1;
                } else {
                    scratch.push(r);
                }
            }
            seg[w..].copy_from_slice(&scratch);
        }

        let mut left_stats = crit.empty();
        for &r in &cols[0][start..mid] {
            crit.add(&mut left_stats, r as usize);
        }
        let mut right_stats = crit.empty();
        for &r in &cols[0][mid..end] {
            crit.add(&mut right_stats, r as usize);
        }
        let left = nodes.len();
        let right = left + 1;
        nodes.push(Node::Leaf { value: Vec::new() });
        nodes.push(Node::Leaf { value: Vec::new() });
        nodes[task.node] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        // right pushed first so the left subtree is grown first
        stack.push(Task {
            node: right,
            start: mid,
            end,
            depth: task.depth + 1,
            stats: right_stats,
        });
        stack.push(Task {
            node: left,
            start,
            end: mid,
            depth: task.depth + 1,
            stats: left_stats,
        });
    }
    Tree { nodes }
}

fn best_split<C: Criterion>(
    x: &Matrix,
    cols: &[Vec<u32>],
    task: &Task<C::Stats>,
    feats: &[usize],
    crit: &C,
    params: &GrowParams,
) -> Option<BestSplit> {
    let parent = crit.score(&task.stats);
    let tol = 1e-12 * (parent.abs() + 1.0);
    let msl = params.min_samples_leaf.max(1);
    let len = task.end - task.start;
    let mut best: Option<BestSplit> = None;
    for &f in feats {
        let col = &cols[f][task.start..task.end];
        let mut left = crit.empty();
        for i in 0..len - 1 {
            let r = col[i] as usize;
            crit.add(&mut left, r);
            let a = x.get(r, f);
            let b = x.get(col[i + 1] as usize, f);
            if a >= b {
                continue;
            }
            let n_left = i + 1;
            if n_left < msl || len - n_left < msl {
                continue;
            }
            let right = crit.sub(&task.stats, &left);
            if !crit.admissible(&left, &right) {
                continue;
            }
            let gain = crit.score(&left) + crit.score(&right) - parent;
            if best.as_ref().is_none_or(|b| gain > b.gain + tol) {
                best = Some(BestSplit {
                    feature: f,
                    threshold: midpoint(a, b),
                    gain,
                    n_left,
                });
            }
        }
    }
    best.filter(|b| b.gain >= params.min_gain - tol)
}
