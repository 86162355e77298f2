use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::flowdata::NUM_CLASSES;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianNbParams {
    /// `ln(prior)`, `-inf` for classes absent from training.
    pub log_priors: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
}

impl GaussianNbParams {
    pub fn joint_log_likelihood(&self, x: &[f64]) -> [f64; NUM_CLASSES] {
        let mut out = [f64::NEG_INFINITY; NUM_CLASSES];
        for c in 0..NUM_CLASSES {
            if self.log_priors[c] == f64::NEG_INFINITY {
                continue;
            }
            let mut ll = self.log_priors[c];
            for ((&v, &m), &var) in x.iter().zip(&self.means[c]).zip(&self.variances[c]) {
                let diff = v - m;
                ll -= 0.5 * (2.0 * std::f64::consts::PI * var).ln() + diff * diff / (2.0 * var);
            }
            out[c] = ll;
        }
        out
    }

    /// Class posteriors, normalized with log-sum-exp.
    pub fn proba(&self, x: &[f64]) -> [f64; NUM_CLASSES] {
        super::matrix::softmax(&self.joint_log_likelihood(x))
    }
}

/// Gaussian naive Bayes. Per-class variances are floored at
/// `var_smoothing * max_j Var(x_j)` so constant features stay usable.
pub(crate) fn fit(x: &Matrix, y: &[u8], var_smoothing: f64) -> GaussianNbParams {
    let n = x.rows();
    let d = x.cols();
    let mut counts = [0usize; NUM_CLASSES];
    let mut means = vec![vec![0.0; d]; NUM_CLASSES];
    for i in 0..n {
        let c = y[i] as usize;
        counts[c] += 1;
        for (m, v) in means[c].iter_mut().zip(x.row(i)) {
            *m += v;
        }
    }
    for c in 0..NUM_CLASSES {
        if counts[c] > 0 {
            means[c].iter_mut().for_each(|m| *m /= counts[c] as f64);
        }
    }
    let mut variances = vec![vec![0.0; d]; NUM_CLASSES];
    for i in 0..n {
        let c = y[i] as usize;
        for ((s, v), m) in variances[c].iter_mut().zip(x.row(i)).zip(&means[c]) {
            *s += (v - m) * (v - m);
        }
    }

    let mut max_var: f64 = 0.0;
    for j in 0..d {
        let mean = (0..n).map(|i| x.get(i, j)).sum::<f64>() / n as f64;
        let var = (0..n).map(|i| (x.get(i, j) - mean).powi(2)).sum::<f64>() / n as f64;
        max_var = max_var.max(var);
    }
    let floor = if max_var > 0.0 { var_smoothing * max_var } else { var_smoothing };

    for c in 0..NUM_CLASSES {
        for v in variances[c].iter_mut() {
            if counts[c] > 0 {
                *v /= counts[c] as f64;
            }
            *v = v.max(floor);
        }
    }
    let log_priors = counts
        .iter()
        .map(|&k| {
            if k == 0 {
                f64::NEG_INFINITY
            } else {
                (k as f64 / n as f64).ln()
            }
        })
        .collect();
    GaussianNbParams {
        log_priors,
        means,
        variances,
    }
}
