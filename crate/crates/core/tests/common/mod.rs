#![allow(dead_code)]

use fsnt_core::flowdata::{ClassLabel, Dataset, FeatureSchema, FlowRecord};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn schema(width: usize) -> FeatureSchema {
    FeatureSchema::new((0..width).map(|i| format!("f{i}"))).unwrap()
}

pub fn dataset(rows: Vec<Vec<f64>>, labels: &[usize]) -> Dataset {
    let width = rows[0].len();
    let recs = rows
        .into_iter()
        .zip(labels)
        .map(|(v, &l)| FlowRecord::new(v, ClassLabel::from_id(l)))
        .collect();
    Dataset::new(schema(width), recs).unwrap()
}

/// Four Gaussian blobs with per-class offsets, every class present.
pub fn blobs(n: usize, width: usize, spread: f64, seed: u64) -> Dataset {
    let mut r = rng(seed);
    let centers: Vec<Vec<f64>> = (0..4)
        .map(|_| (0..width).map(|_| r.random_range(-3.0..3.0)).collect())
        .collect();
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % 4;
        rows.push(
            centers[c]
                .iter()
                .map(|m| m + spread * (r.random::<f64>() - 0.5) * 2.0)
                .collect(),
        );
        labels.push(c);
    }
    dataset(rows, &labels)
}

/// Random labeled data on a coarse grid so ties and duplicates occur.
pub fn grid(n: usize, width: usize, levels: i32, seed: u64) -> Dataset {
    let mut r = rng(seed);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..width).map(|_| r.random_range(0..levels) as f64 * 0.5).collect())
        .collect();
    let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..4)).collect();
    dataset(rows, &labels)
}
