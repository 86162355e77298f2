//! Cleaning, deduplication, z-score standardization and train/test splits.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flowdata::{apportion, class_indices, record_key, Dataset, FeatureSchema, FlowRecord, NUM_CLASSES};

#[derive(Debug, Error, PartialEq)]
pub enum PreprocessError {
    #[error("no records remain after removing non-finite rows")]
    EmptyAfterClean,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("schema mismatch: expected {expected} features, got {got}")]
    SchemaMismatch { expected: usize, got: usize },
    #[error("dataset contains non-finite values")]
    NonFinite,
    #[error("class {0} has no records (stratified split)")]
    EmptyClass(usize),
    #[error("dataset is not labeled")]
    NotLabeled,
    #[error("train fraction {0} outside (0, 1)")]
    InvalidFraction(f64),
}

/// Remove every record holding a NaN or infinite value.
pub fn drop_invalid(d: &Dataset) -> Result<(Dataset, usize), PreprocessError> {
    let kept: Vec<FlowRecord> = d.records().iter().filter(|r| r.is_finite()).cloned().collect();
    if kept.is_empty() {
        return Err(PreprocessError::EmptyAfterClean);
    }
    let removed = d.len() - kept.len();
    Ok((rebuild(d.schema(), kept), removed))
}

/// Keep the first occurrence of each exact (values, label) tuple.
pub fn dedup(d: &Dataset) -> (Dataset, usize) {
    let mut seen = HashSet::with_capacity(d.len());
    let kept: Vec<FlowRecord> = d
        .records()
        .iter()
        .filter(|r| seen.insert(record_key(r)))
        .cloned()
        .collect();
    let removed = d.len() - kept.len();
    (rebuild(d.schema(), kept), removed)
}

fn rebuild(schema: &FeatureSchema, records: Vec<FlowRecord>) -> Dataset {
    Dataset::new(schema.clone(), records).expect("records come from a dataset with this schema")
}

/// Per-feature means and population standard deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationParams {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub schema: FeatureSchema,
}

impl StandardizationParams {
    /// Parameters that leave every value unchanged.
    pub fn identity(schema: FeatureSchema) -> Self {
        let n = schema.count();
        Self {
            means: vec![0.0; n],
            stds: vec![1.0; n],
            schema,
        }
    }

    pub fn apply_row(&self, values: &[f64], out: &mut [f64]) {
        for (j, (&x, o)) in values.iter().zip(out.iter_mut()).enumerate() {
            let s = self.stds[j];
            *o = if s > 0.0 { (x - self.means[j]) / s } else { 0.0 };
        }
    }
}

/// Neumaier-compensated sum.
pub(crate) fn compensated_sum<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for x in it {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub fn fit_standardizer(d: &Dataset) -> Result<StandardizationParams, PreprocessError> {
    if d.is_empty() {
        return Err(PreprocessError::EmptyDataset);
    }
    if !d.records().iter().all(FlowRecord::is_finite) {
        return Err(PreprocessError::NonFinite);
    }
    let n = d.len() as f64;
    let width = d.schema().count();
    let mut means = Vec::with_capacity(width);
    let mut stds = Vec::with_capacity(width);
    for j in 0..width {
        let mean = compensated_sum(d.records().iter().map(|r| r.values[j])) / n;
        let var = compensated_sum(d.records().iter().map(|r| {
            let c = r.values[j] - mean;
            c * c
        })) / n;
        means.push(mean);
        stds.push(var.sqrt());
    }
    Ok(StandardizationParams {
        means,
        stds,
        schema: d.schema().clone(),
    })
}

/// Map each cell to `(x - mean) / std`; zero-variance columns become 0.
pub fn apply_standardizer(d: &Dataset, p: &StandardizationParams) -> Result<Dataset, PreprocessError> {
    if d.schema() != &p.schema {
        return Err(PreprocessError::SchemaMismatch {
            expected: p.schema.count(),
            got: d.schema().count(),
        });
    }
    if !d.records().iter().all(FlowRecord::is_finite) {
        return Err(PreprocessError::NonFinite);
    }
    let records = d
        .records()
        .iter()
        .map(|r| {
            let mut out = vec![0.0; r.values.len()];
            p.apply_row(&r.values, &mut out);
            FlowRecord::new(out, r.label)
        })
        .collect();
    Ok(rebuild(d.schema(), records))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.6,
            seed: 42,
            stratified: true,
        }
    }
}

/// Index partition produced by [`split_indices`]; both lists ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn split_indices(d: &Dataset, s: &SplitSpec) -> Result<SplitIndices, PreprocessError> {
    if !(s.train_fraction > 0.0 && s.train_fraction < 1.0) {
        return Err(PreprocessError::InvalidFraction(s.train_fraction));
    }
    let n = d.len();
    let target = (s.train_fraction * n as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let mut train = Vec::with_capacity(target);
    let mut test = Vec::with_capacity(n - target.min(n));

    if s.stratified {
        if !d.labeled() {
            return Err(PreprocessError::NotLabeled);
        }
        let mut per_class = class_indices(d);
        if let Some(empty) = per_class.iter().position(Vec::is_empty) {
            return Err(PreprocessError::EmptyClass(empty));
        }
        let counts: Vec<usize> = per_class.iter().map(Vec::len).collect();
        let alloc = apportion(&counts, target);
        for (idx, take) in per_class.iter_mut().zip(alloc) {
            idx.shuffle(&mut rng);
            train.extend_from_slice(&idx[..take]);
            test.extend_from_slice(&idx[take..]);
        }
    } else {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        train.extend_from_slice(&idx[..target]);
        test.extend_from_slice(&idx[target..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitIndices { train, test })
}

/// Disjoint, covering train/test partition. Stratified splits allocate
/// `round(fraction * n)` training records across classes by largest
/// remainder, remainder ties going to the lower class id.
pub fn train_test_split(d: &Dataset, s: &SplitSpec) -> Result<(Dataset, Dataset), PreprocessError> {
    let idx = split_indices(d, s)?;
    Ok((d.select(&idx.train), d.select(&idx.test)))
}

/// Per-class training counts a stratified split would produce.
pub fn stratified_train_counts(counts: [usize; NUM_CLASSES], fraction: f64) -> Vec<usize> {
    let n: usize = counts.iter().sum();
    apportion(&counts, (fraction * n as f64).round() as usize)
}
