mod common;

use fsnt_core::features::{
    correlation_matrix, covariance, fit_pca, inverse_transform_pca, jacobi_eigen, rank_features_by_loading,
    transform_pca, FeatureError,
};
use fsnt_core::flowdata::Dataset;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

/// Correlated random data: iid noise mixed through a random matrix.
fn correlated(n: usize, d: usize, seed: u64) -> Dataset {
    let mut r = common::rng(seed);
    let mix: Vec<Vec<f64>> = (0..d).map(|_| (0..d).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let z: Vec<f64> = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
            (0..d).map(|j| (0..d).map(|k| mix[j][k] * z[k]).sum::<f64>() + j as f64).collect()
        })
        .collect();
    common::dataset(rows, &vec![0; n])
}

#[test]
fn components_are_orthonormal_and_conserve_variance() {
    for seed in 0..20 {
        let mut r = common::rng(seed);
        let d = r.random_range(5..=10);
        let data = correlated(200, d, seed);
        let m = fit_pca(&data, d).unwrap();
        for a in 0..d {
            for b in 0..d {
                let dot: f64 = m.components[a].iter().zip(&m.components[b]).map(|(x, y)| x * y).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-9, "seed {seed} ({a},{b}) {dot}");
            }
        }
        let (_, cov) = covariance(&data);
        let trace: f64 = (0..d).map(|i| cov[i][i]).sum();
        assert!((m.eigenvalues.iter().sum::<f64>() - trace).abs() < 1e-8);
        for w in m.eigenvalues.windows(2) {
            assert!(w[0] >= w[1]);
        }

        let scores = transform_pca(&data, &m).unwrap();
        let back = inverse_transform_pca(&scores, &m, Some(data.schema())).unwrap();
        for (a, b) in data.records().iter().zip(back.records()) {
            for (x, y) in a.values.iter().zip(&b.values) {
                assert!((x - y).abs() < 1e-8);
            }
        }
    }
}

#[test]
fn eigenpairs_match_dense_solver() {
    for seed in 100..130 {
        let mut r = common::rng(seed);
        let d = r.random_range(5..=10);
        let data = correlated(150, d, seed);
        let (_, cov) = covariance(&data);
        let m = fit_pca(&data, d).unwrap();

        let oracle = SymmetricEigen::new(DMatrix::from_fn(d, d, |i, j| cov[i][j]));
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| oracle.eigenvalues[b].total_cmp(&oracle.eigenvalues[a]));
        for (k, &i) in order.iter().enumerate() {
            assert!((m.eigenvalues[k] - oracle.eigenvalues[i]).abs() < 1e-8);
            // eigenvectors agree up to sign
            let v = oracle.eigenvectors.column(i);
            let dot: f64 = (0..d).map(|j| v[j] * m.components[k][j]).sum();
            let sign = dot.signum();
            for j in 0..d {
                assert!((v[j] * sign - m.components[k][j]).abs() < 1e-8, "seed {seed} comp {k}");
            }
        }
    }
}

#[test]
fn jacobi_on_known_matrix() {
    let (vals, vecs) = jacobi_eigen(&[vec![2.0, 1.0], vec![1.0, 2.0]], 1e-14);
    let mut v = vals.clone();
    v.sort_by(f64::total_cmp);
    assert!((v[0] - 1.0).abs() < 1e-12 && (v[1] - 3.0).abs() < 1e-12);
    for (lambda, vec) in vals.iter().zip(&vecs) {
        let av = [2.0 * vec[0] + vec[1], vec[0] + 2.0 * vec[1]];
        assert!((av[0] - lambda * vec[0]).abs() < 1e-12);
        assert!((av[1] - lambda * vec[1]).abs() < 1e-12);
    }
}

#[test]
fn k_bounds() {
    let data = correlated(20, 5, 1);
    assert!(matches!(fit_pca(&data, 6), Err(FeatureError::KTooLarge { k: 6, dim: 5 })));
    assert!(matches!(fit_pca(&data, 0), Err(FeatureError::KTooLarge { .. })));
    let m = fit_pca(&data, 2).unwrap();
    assert_eq!(m.component_schema().names(), ["PC1", "PC2"]);
    let ratio: f64 = fit_pca(&data, 5).unwrap().explained_variance_ratio().iter().sum();
    assert!((ratio - 1.0).abs() < 1e-12);
}

#[test]
fn ranking_and_correlation() {
    // f1 is a scaled copy of f0, f2 is small noise
    let mut r = common::rng(9);
    let rows: Vec<Vec<f64>> = (0..100)
        .map(|_| {
            let a: f64 = r.random_range(-10.0..10.0);
            vec![a, 3.0 * a, r.random_range(-0.1..0.1)]
        })
        .collect();
    let d = common::dataset(rows, &vec![1; 100]);
    let m = fit_pca(&d, 1).unwrap();
    let rank = rank_features_by_loading(&m, d.schema()).unwrap();
    assert_eq!(rank.top(1), ["f1"]);
    let c = correlation_matrix(&d).unwrap();
    assert!((c.values[0][1] - 1.0).abs() < 1e-12);
    assert_eq!(c.values[2][2], 1.0);
    let csv = c.to_csv();
    assert!(csv.starts_with("feature,f0,f1,f2\n"));
    assert_eq!(csv.lines().count(), 4);
}
