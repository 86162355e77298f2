//! End-to-end training workflow shared by the CLI and the tests:
//! clean, dedup, split, standardize, project, fit, evaluate.

use thiserror::Error;

use crate::eval::{compare_models, evaluate, ComparisonTable, EvalError, EvalOptions, EvalReport};
use crate::features::{fit_pca, FeatureError, DEFAULT_COMPONENTS};
use crate::flowdata::{Dataset, FeatureSchema, FlowDataError};
use crate::learn::{fit, EstimatorSpec, LearnError, Preprocessing, TrainedModel};
use crate::preprocess::{
    apply_standardizer, dedup, drop_invalid, fit_standardizer, train_test_split, PreprocessError, SplitSpec,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Data(#[from] FlowDataError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub split: SplitSpec,
    /// PCA components to keep; `None` trains on standardized features.
    pub components: Option<usize>,
    /// Fit the standardizer on the whole cleaned corpus instead of the
    /// training split only.
    pub standardize_on_all: bool,
    pub eval: EvalOptions,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            split: SplitSpec::default(),
            components: Some(DEFAULT_COMPONENTS),
            standardize_on_all: false,
            eval: EvalOptions::default(),
        }
    }
}

/// A fixed data view: split, fitted preprocessing and the transformed
/// training set. Every model compared against this view sees the same data.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub input_schema: FeatureSchema,
    pub preprocessing: Preprocessing,
    /// Transformed training set.
    pub train: Dataset,
    /// Raw (cleaned) test set; models with baked preprocessing consume it.
    pub test_raw: Dataset,
    pub dropped_invalid: usize,
    pub duplicates: usize,
}

pub fn prepare(d: &Dataset, cfg: &PipelineConfig) -> Result<Prepared, PipelineError> {
    if !d.labeled() {
        return Err(FlowDataError::NotLabeled.into());
    }
    if let Some(k) = cfg.components {
        if k == 0 || k > d.schema().count() {
            return Err(FeatureError::KTooLarge {
                k,
                dim: d.schema().count(),
            }
            .into());
        }
    }
    let (clean, dropped_invalid) = drop_invalid(d)?;
    let (clean, duplicates) = dedup(&clean);
    let (train_raw, test_raw) = train_test_split(&clean, &cfg.split)?;
    let standardizer = fit_standardizer(if cfg.standardize_on_all { &clean } else { &train_raw })?;
    let train_std = apply_standardizer(&train_raw, &standardizer)?;
    let pca = cfg.components.map(|k| fit_pca(&train_std, k)).transpose()?;
    let preprocessing = Preprocessing {
        standardizer: Some(standardizer),
        pca,
    };
    let train = preprocessing.apply(&train_raw);
    Ok(Prepared {
        input_schema: d.schema().clone(),
        preprocessing,
        train,
        test_raw,
        dropped_invalid,
        duplicates,
    })
}

/// Fit on the prepared training view, bake the preprocessing into the
/// model, evaluate on the held-out raw test set and store the headline
/// figures in the model.
pub fn train_model(
    p: &Prepared,
    spec: &EstimatorSpec,
    opts: &EvalOptions,
) -> Result<(TrainedModel, EvalReport), PipelineError> {
    let model = fit(spec, &p.train)?.with_preprocessing(p.preprocessing.clone(), p.input_schema.clone())?;
    let mut report = evaluate(&model, &p.test_raw, opts)?;
    report.fingerprint.train_rows = Some(p.train.len());
    let mut model = model;
    model.meta.evaluation = Some(report.stored());
    Ok((model, report))
}

/// Train and evaluate every spec against one shared view.
pub fn compare(
    p: &Prepared,
    specs: &[EstimatorSpec],
    opts: &EvalOptions,
) -> Result<(ComparisonTable, Vec<TrainedModel>), PipelineError> {
    let mut reports = Vec::with_capacity(specs.len());
    let mut models = Vec::with_capacity(specs.len());
    for spec in specs {
        let (m, r) = train_model(p, spec, opts)?;
        reports.push(r);
        models.push(m);
    }
    Ok((compare_models(reports), models))
}
