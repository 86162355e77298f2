use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::flowdata::NUM_CLASSES;

/// Brute-force k-nearest-neighbours over the stored training matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnParams {
    pub k: usize,
    pub points: Matrix,
    pub labels: Vec<u8>,
}

impl KnnParams {
    /// Indices of the `k` nearest training rows by squared Euclidean
    /// distance, nearest first. Equal distances keep the lower index.
    pub fn neighbors(&self, x: &[f64]) -> Vec<usize> {
        let k = self.k.min(self.points.rows());
        // (distance, index), kept sorted ascending
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        let mut bound = f64::INFINITY;
        let d = self.points.cols();
        for i in 0..self.points.rows() {
            let row = self.points.row(i);
            let mut dist = 0.0;
            let mut j = 0;
            // partial sums only grow, so abandoning a row once it reaches the
            // current k-th distance cannot change the result
            while j < d {
                let end = (j + 8).min(d);
                for t in j..end {
                    let diff = row[t] - x[t];
                    dist += diff * diff;
                }
                if dist >= bound {
                    break;
                }
                j = end;
            }
            if dist < bound {
                let pos = best.partition_point(|&(bd, _)| bd <= dist);
                best.insert(pos, (dist, i));
                if best.len() > k {
                    best.pop();
                }
                if best.len() == k {
                    bound = best[k - 1].0;
                }
            }
        }
        best.into_iter().map(|(_, i)| i).collect()
    }

    /// Neighbour vote fractions.
    pub fn proba(&self, x: &[f64]) -> [f64; NUM_CLASSES] {
        let nn = self.neighbors(x);
        let mut p = [0.0; NUM_CLASSES];
        for &i in &nn {
            p[self.labels[i] as usize] += 1.0;
        }
        let total = nn.len() as f64;
        for v in &mut p {
            *v /= total;
        }
        p
    }
}
