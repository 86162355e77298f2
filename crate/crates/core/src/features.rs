//! Principal component analysis, loading-based feature ranking and Pearson
//! correlation matrices.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flowdata::{Dataset, FeatureSchema, FlowRecord};
use crate::preprocess::compensated_sum;

/// Default number of retained components.
pub const DEFAULT_COMPONENTS: usize = 24;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("k = {k} outside 1..={dim}")]
    KTooLarge { k: usize, dim: usize },
    #[error("need at least 2 records, got {0}")]
    DegenerateData(usize),
    #[error("schema mismatch: expected width {expected}, got {got}")]
    SchemaMismatch { expected: usize, got: usize },
    #[error("dataset contains non-finite values")]
    NonFinite,
}

/// Eigen-decomposition of a symmetric matrix by the cyclic Jacobi method.
///
/// Returns `(eigenvalues, eigenvectors)` where `eigenvectors[i]` pairs with
/// `eigenvalues[i]`; order is whatever the rotations leave on the diagonal.
/// Sweeps stop once the off-diagonal Frobenius mass drops below
/// `tol * max(1, ||A||_F)`.
pub fn jacobi_eigen(matrix: &[Vec<f64>], tol: f64) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = matrix.len();
    let mut a: Vec<Vec<f64>> = matrix.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    let off = |a: &[Vec<f64>]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += 2.0 * a[i][j] * a[i][j];
            }
        }
        s.sqrt()
    };

    let norm: f64 = a.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
    let limit = tol * norm.max(1.0);
    for _sweep in 0..100 {
        if off(&a) <= limit {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p][q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vkp = row[p];
                    let vkq = row[q];
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let values = (0..n).map(|i| a[i][i]).collect();
    // columns of v are eigenvectors; return them as rows
    let vectors = (0..n).map(|j| (0..n).map(|i| v[i][j]).collect()).collect();
    (values, vectors)
}

/// Population covariance matrix (divide by n) and column means.
pub fn covariance(d: &Dataset) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = d.len() as f64;
    let dim = d.schema().count();
    let means: Vec<f64> = (0..dim)
        .map(|j| compensated_sum(d.records().iter().map(|r| r.values[j])) / n)
        .collect();
    let mut cov = vec![vec![0.0; dim]; dim];
    let mut centered = vec![0.0; dim];
    for r in d.records() {
        for j in 0..dim {
            centered[j] = r.values[j] - means[j];
        }
        for i in 0..dim {
            let ci = centered[i];
            for j in i..dim {
                cov[i][j] += ci * centered[j];
            }
        }
    }
    for i in 0..dim {
        for j in i..dim {
            cov[i][j] /= n;
            cov[j][i] = cov[i][j];
        }
    }
    (means, cov)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub means: Vec<f64>,
    /// One orthonormal basis vector per row, by decreasing eigenvalue.
    pub components: Vec<Vec<f64>>,
    /// Retained eigenvalues, non-increasing.
    pub eigenvalues: Vec<f64>,
    /// Every eigenvalue of the covariance, retained or not.
    pub all_eigenvalues: Vec<f64>,
    pub input_dim: usize,
}

impl PcaModel {
    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn project_row(&self, x: &[f64], out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.components) {
            *o = c.iter().zip(x).zip(&self.means).map(|((ci, xi), mi)| ci * (xi - mi)).sum();
        }
    }

    pub fn reconstruct_row(&self, scores: &[f64]) -> Vec<f64> {
        let mut x = self.means.clone();
        for (s, c) in scores.iter().zip(&self.components) {
            for (xi, ci) in x.iter_mut().zip(c) {
                *xi += s * ci;
            }
        }
        x
    }

    pub fn component_schema(&self) -> FeatureSchema {
        FeatureSchema::new((1..=self.k()).map(|i| format!("PC{i}"))).expect("unique")
    }

    /// Fraction of total variance carried by each retained component.
    pub fn explained_variance_ratio(&self) -> Vec<f64> {
        let total: f64 = self.all_eigenvalues.iter().sum();
        self.eigenvalues
            .iter()
            .map(|e| if total > 0.0 { e / total } else { 0.0 })
            .collect()
    }
}

/// Fit PCA on the population covariance of `d`, keeping the top `k`
/// components. Each component's sign is fixed so that its largest-magnitude
/// coordinate is positive.
pub fn fit_pca(d: &Dataset, k: usize) -> Result<PcaModel, FeatureError> {
    let dim = d.schema().count();
    if k == 0 || k > dim {
        return Err(FeatureError::KTooLarge { k, dim });
    }
    if d.len() < 2 {
        return Err(FeatureError::DegenerateData(d.len()));
    }
    if !d.records().iter().all(FlowRecord::is_finite) {
        return Err(FeatureError::NonFinite);
    }
    let (means, cov) = covariance(d);
    let (values, vectors) = jacobi_eigen(&cov, 1e-12);

    let mut order: Vec<usize> = (0..dim).collect();
    // stable sort keeps the diagonal order for exactly equal eigenvalues
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let clamp = |e: f64| if e < 0.0 { 0.0 } else { e };
    let all_eigenvalues: Vec<f64> = order.iter().map(|&i| clamp(values[i])).collect();

    let components: Vec<Vec<f64>> = order[..k]
        .iter()
        .map(|&i| {
            let mut c = vectors[i].clone();
            let mut pivot = 0;
            for (j, x) in c.iter().enumerate() {
                if x.abs() > c[pivot].abs() {
                    pivot = j;
                }
            }
            if c[pivot] < 0.0 {
                c.iter_mut().for_each(|x| *x = -*x);
            }
            c
        })
        .collect();

    Ok(PcaModel {
        means,
        components,
        eigenvalues: all_eigenvalues[..k].to_vec(),
        all_eigenvalues,
        input_dim: dim,
    })
}

pub fn transform_pca(d: &Dataset, m: &PcaModel) -> Result<Dataset, FeatureError> {
    if d.schema().count() != m.input_dim {
        return Err(FeatureError::SchemaMismatch {
            expected: m.input_dim,
            got: d.schema().count(),
        });
    }
    let records = d
        .records()
        .iter()
        .map(|r| {
            let mut out = vec![0.0; m.k()];
            m.project_row(&r.values, &mut out);
            FlowRecord::new(out, r.label)
        })
        .collect();
    Ok(Dataset::new(m.component_schema(), records).expect("k-wide rows"))
}

/// Map component scores back to the input space. The output uses
/// `schema` when given, otherwise generic `x{i}` names.
pub fn inverse_transform_pca(
    scores: &Dataset,
    m: &PcaModel,
    schema: Option<&FeatureSchema>,
) -> Result<Dataset, FeatureError> {
    if scores.schema().count() != m.k() {
        return Err(FeatureError::SchemaMismatch {
            expected: m.k(),
            got: scores.schema().count(),
        });
    }
    let schema = match schema {
        Some(s) if s.count() == m.input_dim => s.clone(),
        Some(s) => {
            return Err(FeatureError::SchemaMismatch {
                expected: m.input_dim,
                got: s.count(),
            })
        }
        None => FeatureSchema::new((0..m.input_dim).map(|i| format!("x{i}"))).expect("unique"),
    };
    let records = scores
        .records()
        .iter()
        .map(|r| FlowRecord::new(m.reconstruct_row(&r.values), r.label))
        .collect();
    Ok(Dataset::new(schema, records).expect("input-width rows"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureRanking {
    pub entries: Vec<(String, f64)>,
}

impl FeatureRanking {
    pub fn top(&self, n: usize) -> Vec<&str> {
        self.entries.iter().take(n).map(|(s, _)| s.as_str()).collect()
    }
}

/// Score each input feature by its eigenvalue-weighted squared loadings
/// over the retained components. Ties keep schema order.
pub fn rank_features_by_loading(m: &PcaModel, schema: &FeatureSchema) -> Result<FeatureRanking, FeatureError> {
    if schema.count() != m.input_dim {
        return Err(FeatureError::SchemaMismatch {
            expected: m.input_dim,
            got: schema.count(),
        });
    }
    let mut entries: Vec<(String, f64)> = schema
        .names()
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let score = m
                .eigenvalues
                .iter()
                .zip(&m.components)
                .map(|(e, c)| e * c[j] * c[j])
                .sum::<f64>();
            (name.clone(), score.max(0.0))
        })
        .collect();
    entries.sort_by(|a, b| b.1.total_cmp(&a.1));
    Ok(FeatureRanking { entries })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationMatrix {
    pub names: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl CorrelationMatrix {
    /// CSV with a header row and a leading name column.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("feature");
        for n in &self.names {
            out.push(',');
            out.push_str(&csv_field(n));
        }
        out.push('\n');
        for (n, row) in self.names.iter().zip(&self.values) {
            out.push_str(&csv_field(n));
            for v in row {
                out.push_str(&format!(",{v:.6}"));
            }
            out.push('\n');
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Pearson correlation of every feature pair. A zero-variance feature has
/// correlation 0 with every other feature and 1 with itself.
pub fn correlation_matrix(d: &Dataset) -> Result<CorrelationMatrix, FeatureError> {
    if d.len() < 2 {
        return Err(FeatureError::DegenerateData(d.len()));
    }
    if !d.records().iter().all(FlowRecord::is_finite) {
        return Err(FeatureError::NonFinite);
    }
    let (_, cov) = covariance(d);
    let dim = cov.len();
    let mut values = vec![vec![0.0; dim]; dim];
    for i in 0..dim {
        values[i][i] = 1.0;
        for j in (i + 1)..dim {
            let denom = (cov[i][i] * cov[j][j]).sqrt();
            let r = if denom > 0.0 {
                (cov[i][j] / denom).clamp(-1.0, 1.0)
            } else {
                0.0
            };
            values[i][j] = r;
            values[j][i] = r;
        }
    }
    Ok(CorrelationMatrix {
        names: d.schema().names().to_vec(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(rows: &[Vec<f64>]) -> Dataset {
        let schema = FeatureSchema::new((0..rows[0].len()).map(|i| format!("f{i}"))).unwrap();
        Dataset::new(schema, rows.iter().map(|r| FlowRecord::new(r.clone(), None)).collect()).unwrap()
    }

    #[test]
    fn rank_one_covariance() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let m = fit_pca(&ds(&rows), 2).unwrap();
        let (_, cov) = covariance(&ds(&rows));
        let trace = cov[0][0] + cov[1][1];
        assert!((m.eigenvalues[0] - trace).abs() < 1e-10);
        assert!(m.eigenvalues[1].abs() < 1e-10);
        // direction (1,2)/sqrt(5), sign fixed by the larger coordinate
        let s5 = 5f64.sqrt();
        assert!((m.components[0][0] - 1.0 / s5).abs() < 1e-10);
        assert!((m.components[0][1] - 2.0 / s5).abs() < 1e-10);
    }

    #[test]
    fn isotropic_eigenvalues_equal() {
        // the four corners of a square: identity covariance
        let rows = vec![vec![1.0, 1.0], vec![1.0, -1.0], vec![-1.0, 1.0], vec![-1.0, -1.0]];
        let m = fit_pca(&ds(&rows), 2).unwrap();
        assert!((m.eigenvalues[0] - 1.0).abs() < 1e-12);
        assert!((m.eigenvalues[1] - 1.0).abs() < 1e-12);
        let r = rank_features_by_loading(&m, &ds(&rows).schema().clone()).unwrap();
        assert_eq!(r.top(2), vec!["f0", "f1"]);
        assert!((r.entries[0].1 - r.entries[1].1).abs() < 1e-12);
    }

    #[test]
    fn rank_one_scores_are_signed_amplitudes() {
        let amps = [-3.0, -1.0, 0.5, 1.5, 2.0];
        let dir = [0.6, 0.8];
        let rows: Vec<Vec<f64>> = amps.iter().map(|a| vec![a * dir[0], a * dir[1]]).collect();
        let d = ds(&rows);
        let m = fit_pca(&d, 1).unwrap();
        let mean_amp = amps.iter().sum::<f64>() / amps.len() as f64;
        let t = transform_pca(&d, &m).unwrap();
        for (r, a) in t.records().iter().zip(amps) {
            assert!((r.values[0] - (a - mean_amp)).abs() < 1e-10);
        }
    }

    #[test]
    fn mean_maps_to_zero_and_back() {
        let rows = vec![vec![1.0, 2.0, 0.0], vec![3.0, -1.0, 2.0], vec![0.0, 0.0, 5.0], vec![2.0, 1.0, 1.0]];
        let d = ds(&rows);
        let m = fit_pca(&d, 2).unwrap();
        let mut out = vec![1.0; 2];
        m.project_row(&m.means, &mut out);
        assert!(out.iter().all(|v| v.abs() < 1e-12));
        assert_eq!(m.reconstruct_row(&[0.0, 0.0]), m.means);
    }

    #[test]
    fn errors() {
        let d = ds(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert_eq!(fit_pca(&d, 3).unwrap_err(), FeatureError::KTooLarge { k: 3, dim: 2 });
        assert_eq!(fit_pca(&d, 0).unwrap_err(), FeatureError::KTooLarge { k: 0, dim: 2 });
        let one = ds(&[vec![1.0, 2.0]]);
        assert_eq!(fit_pca(&one, 1).unwrap_err(), FeatureError::DegenerateData(1));
        assert_eq!(correlation_matrix(&one).unwrap_err(), FeatureError::DegenerateData(1));
        let m = fit_pca(&d, 1).unwrap();
        let wide = ds(&[vec![1.0, 2.0, 3.0]]);
        assert!(matches!(transform_pca(&wide, &m), Err(FeatureError::SchemaMismatch { .. })));
        assert!(matches!(
            inverse_transform_pca(&d, &m, None),
            Err(FeatureError::SchemaMismatch { .. })
        ));
    }

    #[test]
    fn correlation_examples() {
        let rows: Vec<Vec<f64>> = (0..10)
            .map(|i| {
                let x = i as f64;
                vec![x, -x, 7.0, x * x]
            })
            .collect();
        let c = correlation_matrix(&ds(&rows)).unwrap();
        assert_eq!(c.values[0][0], 1.0);
        assert!((c.values[0][1] + 1.0).abs() < 1e-12);
        assert_eq!(c.values[0][2], 0.0);
        assert_eq!(c.values[2][2], 1.0);
        assert!(c.to_csv().starts_with("feature,f0,f1,f2,f3\nf0,1.000000,-1.000000,0.000000,"));
    }
}
