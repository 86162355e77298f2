//! Classification metrics, ROC/AUC, model comparison and report export.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::CorrelationMatrix;
use crate::flowdata::{ClassLabel, Dataset, NUM_CLASSES};
use crate::learn::{argmax, EstimatorSpec, LearnError, StoredEvaluation, TrainedModel};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("length mismatch: {truth} truth labels vs {other} predictions")]
    LengthMismatch { truth: usize, other: usize },
    #[error("label {0} out of range 0..4")]
    LabelOutOfRange(usize),
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("class {0} has no positives or no negatives")]
    DegenerateClass(usize),
    #[error("test set must be labeled and non-empty")]
    InvalidTestSet,
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..NUM_CLASSES).map(|c| self.counts[c][c]).sum()
    }

    pub fn row_sum(&self, c: usize) -> u64 {
        self.counts[c].iter().sum()
    }

    pub fn col_sum(&self, c: usize) -> u64 {
        self.counts.iter().map(|r| r[c]).sum()
    }
}

fn check_lengths(truth: usize, other: usize) -> Result<(), EvalError> {
    if truth != other {
        return Err(EvalError::LengthMismatch { truth, other });
    }
    if truth == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    Ok(())
}

pub fn confusion_matrix(truth: &[usize], predicted: &[usize]) -> Result<ConfusionMatrix, EvalError> {
    check_lengths(truth.len(), predicted.len())?;
    let mut counts = [[0u64; NUM_CLASSES]; NUM_CLASSES];
    for (&t, &p) in truth.iter().zip(predicted) {
        if t >= NUM_CLASSES {
            return Err(EvalError::LabelOutOfRange(t));
        }
        if p >= NUM_CLASSES {
            return Err(EvalError::LabelOutOfRange(p));
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: [f64; NUM_CLASSES],
    pub recall: [f64; NUM_CLASSES],
    pub f1: [f64; NUM_CLASSES],
    pub support: [u64; NUM_CLASSES],
    pub accuracy: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Zero denominators give 0. F1 is computed as `2tp / (rowsum + colsum)`,
/// which equals `2PR/(P+R)` exactly in rational arithmetic.
pub fn class_metrics(cm: &ConfusionMatrix) -> Result<ClassMetrics, EvalError> {
    let total = cm.total();
    if total == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let mut m = ClassMetrics {
        precision: [0.0; NUM_CLASSES],
        recall: [0.0; NUM_CLASSES],
        f1: [0.0; NUM_CLASSES],
        support: [0; NUM_CLASSES],
        accuracy: ratio(cm.trace(), total),
    };
    for c in 0..NUM_CLASSES {
        let tp = cm.counts[c][c];
        let (row, col) = (cm.row_sum(c), cm.col_sum(c));
        m.precision[c] = ratio(tp, col);
        m.recall[c] = ratio(tp, row);
        m.f1[c] = ratio(2 * tp, row + col);
        m.support[c] = row;
    }
    Ok(m)
}

/// F1 from a precision/recall pair, 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// `(fpr, tpr)` from `(0, 0)` to `(1, 1)`.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// Trapezoidal area under a polyline.
pub fn trapezoid(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) * 0.5)
        .sum()
}

/// ROC over `(score, is_positive)` pairs. Equal scores form one block, so
/// ties contribute a diagonal segment.
pub fn roc_from_scores(pairs: &mut [(f64, bool)]) -> Option<RocCurve> {
    let pos = pairs.iter().filter(|p| p.1).count() as f64;
    let neg = pairs.len() as f64 - pos;
    if pos == 0.0 || neg == 0.0 {
        return None;
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut i = 0;
    while i < pairs.len() {
        let s = pairs[i].0;
        while i < pairs.len() && pairs[i].0.total_cmp(&s).is_eq() {
            if pairs[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / neg, tp as f64 / pos));
    }
    let auc = trapezoid(&points);
    Some(RocCurve { points, auc })
}

/// One-vs-rest ROC for `positive_class` ranked by that class's probability.
pub fn roc_curve(truth: &[usize], scores: &[[f64; NUM_CLASSES]], positive_class: usize) -> Result<RocCurve, EvalError> {
    check_lengths(truth.len(), scores.len())?;
    if positive_class >= NUM_CLASSES {
        return Err(EvalError::LabelOutOfRange(positive_class));
    }
    let mut pairs: Vec<(f64, bool)> = truth
        .iter()
        .zip(scores)
        .map(|(&t, s)| (s[positive_class], t == positive_class))
        .collect();
    roc_from_scores(&mut pairs).ok_or(EvalError::DegenerateClass(positive_class))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AucAverage {
    /// Unweighted mean of one-vs-rest AUCs over classes present in truth.
    #[default]
    Macro,
    /// One curve over every (record, class) score pooled together.
    Micro,
}

fn present_classes(truth: &[usize]) -> Result<Vec<usize>, EvalError> {
    let mut seen = [false; NUM_CLASSES];
    for &t in truth {
        if t >= NUM_CLASSES {
            return Err(EvalError::LabelOutOfRange(t));
        }
        seen[t] = true;
    }
    let present: Vec<usize> = (0..NUM_CLASSES).filter(|&c| seen[c]).collect();
    if present.len() < 2 {
        return Err(EvalError::DegenerateClass(present.first().copied().unwrap_or(0)));
    }
    Ok(present)
}

pub fn macro_auc(truth: &[usize], scores: &[[f64; NUM_CLASSES]]) -> Result<f64, EvalError> {
    multiclass_auc(truth, scores, AucAverage::Macro)
}

pub fn multiclass_auc(truth: &[usize], scores: &[[f64; NUM_CLASSES]], avg: AucAverage) -> Result<f64, EvalError> {
    check_lengths(truth.len(), scores.len())?;
    let present = present_classes(truth)?;
    match avg {
        AucAverage::Macro => {
            let mut sum = 0.0;
            for &c in &present {
                sum += roc_curve(truth, scores, c)?.auc;
            }
            Ok(sum / present.len() as f64)
        }
        AucAverage::Micro => {
            let mut pairs: Vec<(f64, bool)> = truth
                .iter()
                .zip(scores)
                .flat_map(|(&t, s)| (0..NUM_CLASSES).map(move |c| (s[c], t == c)))
                .collect();
            Ok(roc_from_scores(&mut pairs).expect("two classes present").auc)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub fit_s: f64,
    /// Mean wall-clock of one full pass of predictions over the test set.
    pub predict_s: f64,
    /// `fit_s + predict_s`.
    pub execution_time_s: f64,
    pub repeats: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetFingerprint {
    pub train_rows: Option<usize>,
    pub test_rows: usize,
    pub test_class_counts: [usize; NUM_CLASSES],
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub spec: EstimatorSpec,
    pub confusion: ConfusionMatrix,
    pub metrics: ClassMetrics,
    /// Indexed by class id; `None` for classes absent from the test set.
    pub roc: Vec<Option<RocCurve>>,
    pub auc_average: AucAverage,
    pub macro_auc: f64,
    /// `None` when timing is disabled for reproducible output.
    pub timing: Option<Timing>,
    pub fingerprint: DatasetFingerprint,
}

impl EvalReport {
    pub fn accuracy(&self) -> f64 {
        self.metrics.accuracy
    }

    pub fn stored(&self) -> StoredEvaluation {
        StoredEvaluation {
            accuracy: self.metrics.accuracy,
            macro_auc: self.macro_auc,
            execution_time_s: self.timing.map_or(0.0, |t| t.execution_time_s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub repeats: usize,
    pub timing: bool,
    pub average: AucAverage,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            repeats: 3,
            timing: true,
            average: AucAverage::Macro,
        }
    }
}

/// Mean of recorded durations.
pub fn mean_duration(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        0.0
    } else {
        samples.iter().sum::<f64>() / samples.len() as f64
    }
}

pub fn evaluate(m: &TrainedModel, test: &Dataset, opts: &EvalOptions) -> Result<EvalReport, EvalError> {
    if test.is_empty() || !test.labeled() {
        return Err(EvalError::InvalidTestSet);
    }
    let truth: Vec<usize> = test.records().iter().map(|r| r.label.expect("labeled").id()).collect();
    let repeats = opts.repeats.max(1);
    let mut durations = Vec::with_capacity(repeats);
    let mut scores = Vec::new();
    for i in 0..repeats {
        let start = Instant::now();
        let s = m.predict_proba_dataset(test)?;
        durations.push(start.elapsed().as_secs_f64());
        if i == 0 {
            scores = s;
        }
    }
    let predicted: Vec<usize> = scores.iter().map(|p| argmax(p)).collect();
    let confusion = confusion_matrix(&truth, &predicted)?;
    let metrics = class_metrics(&confusion)?;
    let roc = (0..NUM_CLASSES).map(|c| roc_curve(&truth, &scores, c).ok()).collect();
    let auc = multiclass_auc(&truth, &scores, opts.average)?;
    let timing = opts.timing.then(|| {
        let predict_s = mean_duration(&durations);
        Timing {
            fit_s: m.meta.fit_seconds,
            predict_s,
            execution_time_s: m.meta.fit_seconds + predict_s,
            repeats,
        }
    });
    Ok(EvalReport {
        model: m.kind().name().to_string(),
        spec: m.spec.clone(),
        confusion,
        metrics,
        roc,
        auc_average: opts.average,
        macro_auc: auc,
        timing,
        fingerprint: DatasetFingerprint {
            train_rows: None,
            test_rows: test.len(),
            test_class_counts: test.class_counts(),
            seed: m.spec.seed,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model: String,
    pub accuracy: f64,
    pub macro_auc: f64,
    pub execution_time_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
    /// Reports in row order.
    pub reports: Vec<EvalReport>,
}

/// Sort by accuracy descending, then macro AUC descending, then name.
pub fn compare_models(mut reports: Vec<EvalReport>) -> ComparisonTable {
    reports.sort_by(|a, b| {
        b.accuracy()
            .total_cmp(&a.accuracy())
            .then(b.macro_auc.total_cmp(&a.macro_auc))
            .then(a.model.cmp(&b.model))
    });
    let rows = reports
        .iter()
        .map(|r| ComparisonRow {
            model: r.model.clone(),
            accuracy: r.accuracy(),
            macro_auc: r.macro_auc,
            execution_time_s: r.timing.map(|t| t.execution_time_s),
        })
        .collect();
    ComparisonTable { rows, reports }
}

fn opt4(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_default()
}

pub fn confusion_csv(cm: &ConfusionMatrix) -> String {
    let mut s = String::from("true\\predicted");
    for c in ClassLabel::ALL {
        write!(s, ",{c}").unwrap();
    }
    s.push('\n');
    for (t, row) in ClassLabel::ALL.iter().zip(&cm.counts) {
        write!(s, "{t}").unwrap();
        for v in row {
            write!(s, ",{v}").unwrap();
        }
        s.push('\n');
    }
    s
}

/// Per-class precision/recall/F1 at `decimals` places, with an accuracy row.
pub fn metrics_csv(m: &ClassMetrics, decimals: usize) -> String {
    let mut s = String::from("class,label,precision,recall,f1,support\n");
    for c in ClassLabel::ALL {
        let i = c.id();
        writeln!(
            s,
            "{i},{c},{:.d$},{:.d$},{:.d$},{}",
            m.precision[i],
            m.recall[i],
            m.f1[i],
            m.support[i],
            d = decimals
        )
        .unwrap();
    }
    writeln!(s, "accuracy,,,,{:.d$},{}", m.accuracy, m.support.iter().sum::<u64>(), d = decimals).unwrap();
    s
}

pub fn roc_csv(r: &RocCurve) -> String {
    let mut s = String::from("fpr,tpr\n");
    for (x, y) in &r.points {
        writeln!(s, "{x},{y}").unwrap();
    }
    s
}

fn json(v: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report types serialize");
    s.push('\n');
    s
}

/// Write one model's confusion matrix, metric tables, ROC points and full
/// JSON report into `dir`, file names prefixed with the model name.
pub fn export_report(r: &EvalReport, dir: impl AsRef<Path>) -> Result<(), EvalError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let name = r.model.to_lowercase();
    fs::write(dir.join(format!("{name}_confusion.csv")), confusion_csv(&r.confusion))?;
    fs::write(dir.join(format!("{name}_metrics.csv")), metrics_csv(&r.metrics, 4))?;
    fs::write(dir.join(format!("{name}_table1.csv")), metrics_csv(&r.metrics, 2))?;
    for (c, roc) in r.roc.iter().enumerate() {
        if let Some(roc) = roc {
            fs::write(dir.join(format!("{name}_roc_class{c}.csv")), roc_csv(roc))?;
        }
    }
    fs::write(dir.join(format!("{name}_report.json")), json(r))?;
    Ok(())
}

pub fn comparison_csv(t: &ComparisonTable) -> String {
    let mut s = String::from("rank,model,accuracy,macro_auc,execution_time_s\n");
    for (i, row) in t.rows.iter().enumerate() {
        writeln!(
            s,
            "{},{},{:.4},{:.4},{}",
            i + 1,
            row.model,
            row.accuracy,
            row.macro_auc,
            opt4(row.execution_time_s)
        )
        .unwrap();
    }
    s
}

/// Write the comparison grid, accuracy bars, stacked confusion matrices and
/// every per-model report into `dir`.
pub fn export_comparison(t: &ComparisonTable, dir: impl AsRef<Path>) -> Result<(), EvalError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    fs::write(dir.join("comparison.csv"), comparison_csv(t))?;

    let mut acc = String::from("model,accuracy\n");
    let mut conf = String::from("model,true_class,predicted_class,count\n");
    for r in &t.reports {
        writeln!(acc, "{},{:.4}", r.model, r.accuracy()).unwrap();
        for (ti, row) in r.confusion.counts.iter().enumerate() {
            for (pi, v) in row.iter().enumerate() {
                writeln!(conf, "{},{ti},{pi},{v}", r.model).unwrap();
            }
        }
    }
    fs::write(dir.join("accuracy.csv"), acc)?;
    fs::write(dir.join("confusion_matrices.csv"), conf)?;
    fs::write(dir.join("comparison.json"), json(&t.rows))?;
    for r in &t.reports {
        export_report(r, dir)?;
    }
    Ok(())
}

pub fn label_counts_csv(counts: &[usize; NUM_CLASSES]) -> String {
    let mut s = String::from("class,label,count\n");
    for c in ClassLabel::ALL {
        writeln!(s, "{},{c},{}", c.id(), counts[c.id()]).unwrap();
    }
    s
}

pub fn export_label_counts(d: &Dataset, dir: impl AsRef<Path>) -> Result<(), EvalError> {
    fs::create_dir_all(dir.as_ref())?;
    fs::write(dir.as_ref().join("label_counts.csv"), label_counts_csv(&d.class_counts()))?;
    Ok(())
}

pub fn export_correlation(c: &CorrelationMatrix, dir: impl AsRef<Path>) -> Result<(), EvalError> {
    fs::create_dir_all(dir.as_ref())?;
    fs::write(dir.as_ref().join("correlation.csv"), c.to_csv())?;
    Ok(())
}
