//! The eight classifiers behind one estimator contract, plus model files.
//!
//! [`fit`] trains on a dataset that is already in classifier space. A
//! [`TrainedModel`] can carry the standardizer and PCA it was trained
//! behind ([`Preprocessing`]); `predict`/`predict_proba` then take raw flow
//! records and apply that preprocessing first.
//!
//! Every estimator emits a length-4 probability vector and `predict` is
//! always its argmax, lowest class id winning ties.

pub mod adaboost;
pub mod forest;
pub mod gbt;
pub mod knn;
pub mod logistic;
pub mod matrix;
pub mod naive_bayes;
mod persist;
pub mod svm;
pub mod tree;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::PcaModel;
use crate::flowdata::{ClassLabel, Dataset, FeatureSchema, NUM_CLASSES};
use crate::preprocess::StandardizationParams;

pub use matrix::{argmax, Matrix};
pub use persist::{load_model, model_from_bytes, model_to_bytes, save_model, FORMAT_VERSION, MAGIC};

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("invalid hyperparameter {name:?}: {reason}")]
    InvalidHyperparameter { name: String, reason: String },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("schema mismatch: model expects {expected} features, got {got}")]
    SchemaMismatch { expected: usize, got: usize },
    #[error("input contains non-finite values")]
    NonFiniteInput,
    #[error("unknown estimator kind {0:?}")]
    UnknownKind(String),
    #[error("model file version {found} not supported (expected {expected})")]
    VersionMismatch { found: u8, expected: u8 },
    #[error("corrupt model file: {0}")]
    CorruptFile(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum EstimatorKind {
    Lr,
    Nb,
    Knn,
    Dt,
    Rf,
    AdaBoost,
    Gbt,
    Svm,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 8] = [
        EstimatorKind::Lr,
        EstimatorKind::Nb,
        EstimatorKind::Knn,
        EstimatorKind::Dt,
        EstimatorKind::Rf,
        EstimatorKind::AdaBoost,
        EstimatorKind::Gbt,
        EstimatorKind::Svm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Lr => "LR",
            EstimatorKind::Nb => "NB",
            EstimatorKind::Knn => "KNN",
            EstimatorKind::Dt => "DT",
            EstimatorKind::Rf => "RF",
            EstimatorKind::AdaBoost => "ADABOOST",
            EstimatorKind::Gbt => "GBT",
            EstimatorKind::Svm => "SVM",
        }
    }

    pub(crate) fn code(self) -> u8 {
        self as u8
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    /// Accepted hyperparameter names with their defaults.
    pub fn defaults(self) -> &'static [(&'static str, f64)] {
        match self {
            EstimatorKind::Lr => &[("learning_rate", 0.1), ("l2", 1e-4), ("max_epochs", 500.0), ("tol", 1e-7)],
            EstimatorKind::Nb => &[("var_smoothing", 1e-9)],
            EstimatorKind::Knn => &[("k", 5.0)],
            EstimatorKind::Dt => &[("max_depth", 20.0), ("min_samples_leaf", 1.0), ("min_impurity_decrease", 0.0)],
            EstimatorKind::Rf => &[
                ("trees", 100.0),
                ("max_depth", 20.0),
                ("min_samples_leaf", 1.0),
                ("min_impurity_decrease", 0.0),
                ("bootstrap", 1.0),
                ("feature_subsampling", 1.0),
            ],
            EstimatorKind::AdaBoost => &[("rounds", 50.0)],
            EstimatorKind::Gbt => &[
                ("rounds", 100.0),
                ("learning_rate", 0.1),
                ("max_depth", 6.0),
                ("lambda", 1.0),
                ("min_child_weight", 1.0),
            ],
            EstimatorKind::Svm => &[("lambda", 1e-4), ("epochs", 50.0)],
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = LearnError;

    fn from_str(s: &str) -> Result<Self, LearnError> {
        let up = s.trim().to_ascii_uppercase();
        let kind = match up.as_str() {
            "LR" | "LOGISTIC" => EstimatorKind::Lr,
            "NB" | "NAIVEBAYES" => EstimatorKind::Nb,
            "KNN" => EstimatorKind::Knn,
            "DT" | "TREE" => EstimatorKind::Dt,
            "RF" | "FOREST" => EstimatorKind::Rf,
            "ADABOOST" | "ADA" => EstimatorKind::AdaBoost,
            "GBT" | "XGBOOST" => EstimatorKind::Gbt,
            "SVM" => EstimatorKind::Svm,
            _ => return Err(LearnError::UnknownKind(s.to_string())),
        };
        Ok(kind)
    }
}

/// Estimator kind, hyperparameter overrides and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSpec {
    pub kind: EstimatorKind,
    /// Overrides of [`EstimatorKind::defaults`]; unset names keep defaults.
    pub hyperparameters: BTreeMap<String, f64>,
    pub seed: u64,
}

impl EstimatorSpec {
    pub fn new(kind: EstimatorKind) -> Self {
        Self {
            kind,
            hyperparameters: BTreeMap::new(),
            seed: 42,
        }
    }

    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.hyperparameters.insert(name.to_string(), value);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn param(&self, name: &str) -> f64 {
        self.hyperparameters.get(name).copied().unwrap_or_else(|| {
            self.kind
                .defaults()
                .iter()
                .find(|(n, _)| *n == name)
                .map(|(_, v)| *v)
                .expect("name listed in defaults")
        })
    }

    /// Check every override name and value for this kind.
    pub fn validate(&self) -> Result<(), LearnError> {
        let defaults = self.kind.defaults();
        for (name, &v) in &self.hyperparameters {
            if !defaults.iter().any(|(n, _)| n == name) {
                return Err(invalid(name, format!("not a {} hyperparameter", self.kind)));
            }
            if !v.is_finite() {
                return Err(invalid(name, "must be finite".into()));
            }
        }
        for &(name, _) in defaults {
            let v = self.param(name);
            let ok = match name {
                "learning_rate" | "lambda" | "var_smoothing" => v > 0.0,
                "l2" | "tol" | "min_impurity_decrease" | "min_child_weight" => v >= 0.0,
                "bootstrap" | "feature_subsampling" => v == 0.0 || v == 1.0,
                "max_depth" | "rounds" => v.fract() == 0.0 && v >= 0.0 && (name != "max_depth" || v >= 1.0),
                _ => v.fract() == 0.0 && v >= 1.0,
            };
            if !ok {
                return Err(invalid(name, format!("value {v} out of range")));
            }
        }
        Ok(())
    }

    fn count(&self, name: &str) -> usize {
        self.param(name) as usize
    }
}

fn invalid(name: &str, reason: String) -> LearnError {
    LearnError::InvalidHyperparameter {
        name: name.to_string(),
        reason,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitLogEntry {
    pub step: usize,
    pub loss: f64,
    pub elapsed_ms: f64,
}

/// Per-epoch / per-round training loss trace.
#[derive(Debug)]
pub struct FitLog {
    start: Instant,
    entries: Vec<FitLogEntry>,
}

impl FitLog {
    fn new() -> Self {
        Self {
            start: Instant::now(),
            entries: Vec::new(),
        }
    }

    pub(crate) fn record(&mut self, step: usize, loss: f64) {
        self.entries.push(FitLogEntry {
            step,
            loss,
            elapsed_ms: self.start.elapsed().as_secs_f64() * 1e3,
        });
    }
}

/// Offline evaluation figures stored with a model and reported by the
/// detection service.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoredEvaluation {
    pub accuracy: f64,
    pub macro_auc: f64,
    pub execution_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub fit_seconds: f64,
    /// False when LR hit its epoch limit before the loss settled.
    pub converged: bool,
    pub fit_log: Vec<FitLogEntry>,
    pub evaluation: Option<StoredEvaluation>,
}

/// Standardization and PCA applied to raw records before the classifier.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Preprocessing {
    pub standardizer: Option<StandardizationParams>,
    pub pca: Option<PcaModel>,
}

impl Preprocessing {
    pub fn output_width(&self, input_width: usize) -> usize {
        self.pca.as_ref().map_or(input_width, PcaModel::k)
    }

    pub fn apply_row(&self, raw: &[f64]) -> Vec<f64> {
        let mut z = raw.to_vec();
        if let Some(s) = &self.standardizer {
            s.apply_row(raw, &mut z);
        }
        match &self.pca {
            Some(p) => {
                let mut out = vec![0.0; p.k()];
                p.project_row(&z, &mut out);
                out
            }
            None => z,
        }
    }

    pub fn apply(&self, d: &Dataset) -> Dataset {
        let schema = match &self.pca {
            Some(p) => p.component_schema(),
            None => d.schema().clone(),
        };
        let records = d
            .records()
            .iter()
            .map(|r| crate::flowdata::FlowRecord::new(self.apply_row(&r.values), r.label))
            .collect();
        Dataset::new(schema, records).expect("preprocessed width matches schema")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModelParams {
    Logistic(logistic::LogisticParams),
    NaiveBayes(naive_bayes::GaussianNbParams),
    Knn(knn::KnnParams),
    Tree(tree::Tree),
    Forest(forest::ForestParams),
    AdaBoost(adaboost::AdaBoostParams),
    Gbt(gbt::GbtParams),
    Svm(svm::SvmParams),
}

impl ModelParams {
    fn proba(&self, x: &[f64]) -> [f64; NUM_CLASSES] {
        match self {
            ModelParams::Logistic(p) => p.proba(x),
            ModelParams::NaiveBayes(p) => p.proba(x),
            ModelParams::Knn(p) => p.proba(x),
            ModelParams::Tree(t) => forest::tree_proba(t, x),
            ModelParams::Forest(p) => p.proba(x),
            ModelParams::AdaBoost(p) => p.proba(x),
            ModelParams::Gbt(p) => p.proba(x),
            ModelParams::Svm(p) => p.proba(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub spec: EstimatorSpec,
    pub class_count: usize,
    /// Schema of the raw records `predict` accepts.
    pub input_schema: FeatureSchema,
    pub preprocessing: Preprocessing,
    pub params: ModelParams,
    pub meta: ModelMeta,
}

impl TrainedModel {
    pub fn kind(&self) -> EstimatorKind {
        self.spec.kind
    }

    /// Attach the preprocessing that maps `input_schema` records into the
    /// space this model was trained in.
    pub fn with_preprocessing(
        mut self,
        preprocessing: Preprocessing,
        input_schema: FeatureSchema,
    ) -> Result<Self, LearnError> {
        let trained_width = self.preprocessing.output_width(self.input_schema.count());
        let out = preprocessing.output_width(input_schema.count());
        if out != trained_width {
            return Err(LearnError::SchemaMismatch {
                expected: trained_width,
                got: out,
            });
        }
        if let Some(s) = &preprocessing.standardizer {
            if s.schema.count() != input_schema.count() {
                return Err(LearnError::SchemaMismatch {
                    expected: input_schema.count(),
                    got: s.schema.count(),
                });
            }
        }
        self.preprocessing = preprocessing;
        self.input_schema = input_schema;
        Ok(self)
    }

    pub fn predict_proba(&self, values: &[f64]) -> Result<[f64; NUM_CLASSES], LearnError> {
        if values.len() != self.input_schema.count() {
            return Err(LearnError::SchemaMismatch {
                expected: self.input_schema.count(),
                got: values.len(),
            });
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(LearnError::NonFiniteInput);
        }
        let x = self.preprocessing.apply_row(values);
        Ok(self.params.proba(&x))
    }

    pub fn predict(&self, values: &[f64]) -> Result<ClassLabel, LearnError> {
        let p = self.predict_proba(values)?;
        Ok(ClassLabel::from_id(argmax(&p)).expect("argmax < 4"))
    }

    /// Probability vectors for every record, in record order.
    pub fn predict_proba_dataset(&self, d: &Dataset) -> Result<Vec<[f64; NUM_CLASSES]>, LearnError> {
        d.records().par_iter().map(|r| self.predict_proba(&r.values)).collect()
    }
}

fn labels_u8(d: &Dataset) -> Result<Vec<u8>, LearnError> {
    d.records()
        .iter()
        .map(|r| {
            r.label
                .map(|l| l.id() as u8)
                .ok_or_else(|| LearnError::InsufficientData("training data must be labeled".into()))
        })
        .collect()
}

/// Train `spec.kind` on `train`, which must be labeled and finite. The
/// returned model has no baked preprocessing.
pub fn fit(spec: &EstimatorSpec, train: &Dataset) -> Result<TrainedModel, LearnError> {
    spec.validate()?;
    if train.is_empty() {
        return Err(LearnError::InsufficientData("empty training set".into()));
    }
    if !train.records().iter().all(|r| r.is_finite()) {
        return Err(LearnError::NonFiniteInput);
    }
    let y = labels_u8(train)?;
    let x = Matrix::from_dataset(train);
    let start = Instant::now();
    let mut log = FitLog::new();
    let mut converged = true;

    let params = match spec.kind {
        EstimatorKind::Lr => {
            let cfg = logistic::LogisticConfig {
                learning_rate: spec.param("learning_rate"),
                l2: spec.param("l2"),
                max_epochs: spec.count("max_epochs"),
                tol: spec.param("tol"),
            };
            let (p, ok) = logistic::fit(&x, &y, &cfg, &mut log);
            converged = ok;
            ModelParams::Logistic(p)
        }
        EstimatorKind::Nb => ModelParams::NaiveBayes(naive_bayes::fit(&x, &y, spec.param("var_smoothing"))),
        EstimatorKind::Knn => {
            let k = spec.count("k");
            if x.rows() < k {
                return Err(LearnError::InsufficientData(format!(
                    "KNN needs at least k = {k} records, got {}",
                    x.rows()
                )));
            }
            ModelParams::Knn(knn::KnnParams {
                k,
                points: x,
                labels: y,
            })
        }
        EstimatorKind::Dt => ModelParams::Tree(forest::fit_tree(&x, &y, &tree_config(spec))),
        EstimatorKind::Rf => {
            let d = x.cols();
            let max_features = if spec.param("feature_subsampling") == 1.0 {
                Some(((d as f64).sqrt() as usize).max(1))
            } else {
                None
            };
            let cfg = forest::ForestConfig {
                trees: spec.count("trees"),
                tree: tree_config(spec),
                bootstrap: spec.param("bootstrap") == 1.0,
                max_features,
            };
            ModelParams::Forest(forest::fit_forest(&x, &y, &cfg, spec.seed))
        }
        EstimatorKind::AdaBoost => ModelParams::AdaBoost(adaboost::fit(&x, &y, spec.count("rounds"), &mut log)),
        EstimatorKind::Gbt => {
            let cfg = gbt::GbtConfig {
                rounds: spec.count("rounds"),
                learning_rate: spec.param("learning_rate"),
                max_depth: spec.count("max_depth"),
                lambda: spec.param("lambda"),
                min_child_weight: spec.param("min_child_weight"),
            };
            ModelParams::Gbt(gbt::fit(&x, &y, &cfg, &mut log))
        }
        EstimatorKind::Svm => {
            let cfg = svm::SvmConfig {
                lambda: spec.param("lambda"),
                epochs: spec.count("epochs"),
            };
            ModelParams::Svm(svm::fit(&x, &y, &cfg, spec.seed, &mut log))
        }
    };

    Ok(TrainedModel {
        spec: spec.clone(),
        class_count: NUM_CLASSES,
        input_schema: train.schema().clone(),
        preprocessing: Preprocessing::default(),
        params,
        meta: ModelMeta {
            fit_seconds: start.elapsed().as_secs_f64(),
            converged,
            fit_log: log.entries,
            evaluation: None,
        },
    })
}

fn tree_config(spec: &EstimatorSpec) -> forest::TreeConfig {
    forest::TreeConfig {
        max_depth: spec.count("max_depth"),
        min_samples_leaf: spec.count("min_samples_leaf"),
        min_impurity_decrease: spec.param("min_impurity_decrease"),
    }
}
