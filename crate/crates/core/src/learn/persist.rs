//! Binary model files.
//!
//! Layout: `"FSNT"`, format version (u8), estimator kind (u8), body length
//! (u64), body, CRC-32 of every preceding byte (u32). Integers and reals
//! in the body are little-endian 64-bit; strings and vectors are
//! length-prefixed.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use super::adaboost::AdaBoostParams;
use super::forest::ForestParams;
use super::gbt::GbtParams;
use super::knn::KnnParams;
use super::logistic::LogisticParams;
use super::matrix::Matrix;
use super::naive_bayes::GaussianNbParams;
use super::svm::SvmParams;
use super::tree::{Node, Tree};
use super::{
    EstimatorKind, EstimatorSpec, FitLogEntry, LearnError, ModelMeta, ModelParams, Preprocessing, StoredEvaluation,
    TrainedModel,
};
use crate::features::PcaModel;
use crate::flowdata::FeatureSchema;
use crate::preprocess::StandardizationParams;

pub const MAGIC: &[u8; 4] = b"FSNT";
pub const FORMAT_VERSION: u8 = 1;
const HEADER_LEN: usize = 4 + 1 + 1 + 8;

#[derive(Default)]
struct Out(Vec<u8>);

impl Out {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.usize(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        self.usize(v.len());
        v.iter().for_each(|&x| self.f64(x));
    }
    fn rows(&mut self, v: &[Vec<f64>]) {
        self.usize(v.len());
        v.iter().for_each(|r| self.f64s(r));
    }
    fn schema(&mut self, s: &FeatureSchema) {
        self.usize(s.count());
        s.names().iter().for_each(|n| self.str(n));
    }
    fn tree(&mut self, t: &Tree) {
        self.usize(t.nodes.len());
        for n in &t.nodes {
            match n {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    self.u8(0);
                    self.usize(*feature);
                    self.f64(*threshold);
                    self.usize(*left);
                    self.usize(*right);
                }
                Node::Leaf { value } => {
                    self.u8(1);
                    self.f64s(value);
                }
            }
        }
    }
    fn trees(&mut self, ts: &[Tree]) {
        self.usize(ts.len());
        ts.iter().for_each(|t| self.tree(t));
    }
}

struct In<'a> {
    buf: &'a [u8],
    pos: usize,
}

fn corrupt(what: &str) -> LearnError {
    LearnError::CorruptFile(what.to_string())
}

impl<'a> In<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], LearnError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| corrupt("unexpected end of body"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, LearnError> {
        Ok(self.take(1)?[0])
    }
    fn u64(&mut self) -> Result<u64, LearnError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn usize(&mut self) -> Result<usize, LearnError> {
        usize::try_from(self.u64()?).map_err(|_| corrupt("length overflow"))
    }
    /// A length prefix for items of at least `item_size` bytes each; bounded
    /// by the remaining body so a damaged prefix cannot trigger a huge
    /// allocation.
    fn len(&mut self, item_size: usize) -> Result<usize, LearnError> {
        let n = self.usize()?;
        if n.saturating_mul(item_size.max(1)) > self.buf.len() - self.pos {
            return Err(corrupt("length prefix exceeds body"));
        }
        Ok(n)
    }
    fn f64(&mut self) -> Result<f64, LearnError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn str(&mut self) -> Result<String, LearnError> {
        let n = self.len(1)?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| corrupt("invalid utf-8"))
    }
    fn f64s(&mut self) -> Result<Vec<f64>, LearnError> {
        let n = self.len(8)?;
        (0..n).map(|_| self.f64()).collect()
    }
    fn rows(&mut self) -> Result<Vec<Vec<f64>>, LearnError> {
        let n = self.len(8)?;
        (0..n).map(|_| self.f64s()).collect()
    }
    fn schema(&mut self) -> Result<FeatureSchema, LearnError> {
        let n = self.len(8)?;
        let names = (0..n).map(|_| self.str()).collect::<Result<Vec<_>, _>>()?;
        FeatureSchema::new(names).map_err(|_| corrupt("duplicate feature name"))
    }
    fn tree(&mut self) -> Result<Tree, LearnError> {
        let n = self.len(9)?;
        let mut nodes = Vec::with_capacity(n);
        for _ in 0..n {
            let node = match self.u8()? {
                0 => Node::Split {
                    feature: self.usize()?,
                    threshold: self.f64()?,
                    left: self.usize()?,
                    right: self.usize()?,
                },
                1 => Node::Leaf { value: self.f64s()? },
                _ => return Err(corrupt("bad tree node tag")),
            };
            nodes.push(node);
        }
        let t = Tree { nodes };
        check_tree(&t)?;
        Ok(t)
    }
    fn trees(&mut self) -> Result<Vec<Tree>, LearnError> {
        let n = self.len(8)?;
        (0..n).map(|_| self.tree()).collect()
    }
}

/// Child links must point forward so traversal always terminates.
fn check_tree(t: &Tree) -> Result<(), LearnError> {
    if t.nodes.is_empty() {
        return Err(corrupt("empty tree"));
    }
    for (i, n) in t.nodes.iter().enumerate() {
        if let Node::Split { left, right, .. } = n {
            if *left <= i || *right <= i || *left >= t.nodes.len() || *right >= t.nodes.len() {
                return Err(corrupt("bad tree link"));
            }
        }
    }
    Ok(())
}

fn write_body(m: &TrainedModel, o: &mut Out) {
    o.u64(m.spec.seed);
    o.usize(m.spec.hyperparameters.len());
    for (k, v) in &m.spec.hyperparameters {
        o.str(k);
        o.f64(*v);
    }
    o.usize(m.class_count);
    o.schema(&m.input_schema);

    match &m.preprocessing.standardizer {
        Some(s) => {
            o.u8(1);
            o.f64s(&s.means);
            o.f64s(&s.stds);
            o.schema(&s.schema);
        }
        None => o.u8(0),
    }
    match &m.preprocessing.pca {
        Some(p) => {
            o.u8(1);
            o.f64s(&p.means);
            o.rows(&p.components);
            o.f64s(&p.eigenvalues);
            o.f64s(&p.all_eigenvalues);
            o.usize(p.input_dim);
        }
        None => o.u8(0),
    }

    match &m.params {
        ModelParams::Logistic(p) => {
            o.rows(&p.weights);
            o.f64s(&p.bias);
        }
        ModelParams::NaiveBayes(p) => {
            o.f64s(&p.log_priors);
            o.rows(&p.means);
            o.rows(&p.variances);
        }
        ModelParams::Knn(p) => {
            o.usize(p.k);
            o.usize(p.points.rows());
            o.usize(p.points.cols());
            p.points.data().iter().for_each(|&v| o.f64(v));
            o.usize(p.labels.len());
            o.0.extend_from_slice(&p.labels);
        }
        ModelParams::Tree(t) => o.tree(t),
        ModelParams::Forest(p) => o.trees(&p.trees),
        ModelParams::AdaBoost(p) => {
            o.trees(&p.stumps);
            o.f64s(&p.alphas);
            o.f64s(&p.errors);
        }
        ModelParams::Gbt(p) => {
            o.f64s(&p.init_scores);
            o.f64(p.learning_rate);
            o.usize(p.rounds.len());
            p.rounds.iter().for_each(|r| o.trees(r));
        }
        ModelParams::Svm(p) => {
            o.rows(&p.weights);
            o.f64s(&p.bias);
        }
    }

    o.f64(m.meta.fit_seconds);
    o.u8(u8::from(m.meta.converged));
    o.usize(m.meta.fit_log.len());
    for e in &m.meta.fit_log {
        o.usize(e.step);
        o.f64(e.loss);
        o.f64(e.elapsed_ms);
    }
    match &m.meta.evaluation {
        Some(e) => {
            o.u8(1);
            o.f64(e.accuracy);
            o.f64(e.macro_auc);
            o.f64(e.execution_time_s);
        }
        None => o.u8(0),
    }
}

fn flag(r: &mut In) -> Result<bool, LearnError> {
    match r.u8()? {
        0 => Ok(false),
        1 => Ok(true),
        _ => Err(corrupt("bad flag byte")),
    }
}

fn read_body(kind: EstimatorKind, r: &mut In) -> Result<TrainedModel, LearnError> {
    let seed = r.u64()?;
    let n = r.len(16)?;
    let mut hyperparameters = BTreeMap::new();
    for _ in 0..n {
        let k = r.str()?;
        hyperparameters.insert(k, r.f64()?);
    }
    let spec = EstimatorSpec {
        kind,
        hyperparameters,
        seed,
    };
    spec.validate().map_err(|e| corrupt(&e.to_string()))?;
    let class_count = r.usize()?;
    let input_schema = r.schema()?;

    let standardizer = if flag(r)? {
        Some(StandardizationParams {
            means: r.f64s()?,
            stds: r.f64s()?,
            schema: r.schema()?,
        })
    } else {
        None
    };
    let pca = if flag(r)? {
        Some(PcaModel {
            means: r.f64s()?,
            components: r.rows()?,
            eigenvalues: r.f64s()?,
            all_eigenvalues: r.f64s()?,
            input_dim: r.usize()?,
        })
    } else {
        None
    };

    let params = match kind {
        EstimatorKind::Lr => ModelParams::Logistic(LogisticParams {
            weights: r.rows()?,
            bias: r.f64s()?,
        }),
        EstimatorKind::Nb => ModelParams::NaiveBayes(GaussianNbParams {
            log_priors: r.f64s()?,
            means: r.rows()?,
            variances: r.rows()?,
        }),
        EstimatorKind::Knn => {
            let k = r.usize()?;
            let rows = r.usize()?;
            let cols = r.usize()?;
            let total = rows.checked_mul(cols).ok_or_else(|| corrupt("matrix size overflow"))?;
            if total.saturating_mul(8) > r.buf.len() - r.pos {
                return Err(corrupt("matrix exceeds body"));
            }
            let data = (0..total).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
            let n = r.len(1)?;
            let labels = r.take(n)?.to_vec();
            if n != rows || labels.iter().any(|&l| l as usize >= class_count) {
                return Err(corrupt("bad KNN labels"));
            }
            ModelParams::Knn(KnnParams {
                k,
                points: Matrix::new(rows, cols, data),
                labels,
            })
        }
        EstimatorKind::Dt => ModelParams::Tree(r.tree()?),
        EstimatorKind::Rf => ModelParams::Forest(ForestParams { trees: r.trees()? }),
        EstimatorKind::AdaBoost => ModelParams::AdaBoost(AdaBoostParams {
            stumps: r.trees()?,
            alphas: r.f64s()?,
            errors: r.f64s()?,
        }),
        EstimatorKind::Gbt => {
            let init_scores = r.f64s()?;
            let learning_rate = r.f64()?;
            let n = r.len(8)?;
            let rounds = (0..n).map(|_| r.trees()).collect::<Result<Vec<_>, _>>()?;
            ModelParams::Gbt(GbtParams {
                init_scores,
                learning_rate,
                rounds,
            })
        }
        EstimatorKind::Svm => ModelParams::Svm(SvmParams {
            weights: r.rows()?,
            bias: r.f64s()?,
        }),
    };

    let fit_seconds = r.f64()?;
    let converged = flag(r)?;
    let n = r.len(24)?;
    let fit_log = (0..n)
        .map(|_| {
            Ok(FitLogEntry {
                step: r.usize()?,
                loss: r.f64()?,
                elapsed_ms: r.f64()?,
            })
        })
        .collect::<Result<Vec<_>, LearnError>>()?;
    let evaluation = if flag(r)? {
        Some(StoredEvaluation {
            accuracy: r.f64()?,
            macro_auc: r.f64()?,
            execution_time_s: r.f64()?,
        })
    } else {
        None
    };
    if r.pos != r.buf.len() {
        return Err(corrupt("trailing bytes in body"));
    }

    let model = TrainedModel {
        spec,
        class_count,
        input_schema,
        preprocessing: Preprocessing { standardizer, pca },
        params,
        meta: ModelMeta {
            fit_seconds,
            converged,
            fit_log,
            evaluation,
        },
    };
    check_shapes(&model)?;
    Ok(model)
}

/// Dimensions must agree end to end so a checksum-valid but inconsistent
/// file fails at load instead of panicking at predict.
fn check_shapes(m: &TrainedModel) -> Result<(), LearnError> {
    let bad = |what: &str| Err(corrupt(&format!("inconsistent {what}")));
    if m.class_count != crate::flowdata::NUM_CLASSES {
        return bad("class count");
    }
    let d_in = m.input_schema.count();
    if let Some(s) = &m.preprocessing.standardizer {
        if s.means.len() != d_in || s.stds.len() != d_in || s.schema.count() != d_in {
            return bad("standardizer");
        }
    }
    let d = match &m.preprocessing.pca {
        Some(p) => {
            if p.input_dim != d_in || p.means.len() != d_in || p.components.iter().any(|c| c.len() != d_in) {
                return bad("PCA");
            }
            p.k()
        }
        None => d_in,
    };
    let k = m.class_count;
    let rows_ok = |rows: &[Vec<f64>]| rows.len() == k && rows.iter().all(|r| r.len() == d);
    let tree_ok = |t: &Tree, leaf: usize| {
        t.nodes.iter().all(|n| match n {
            Node::Split { feature, .. } => *feature < d,
            Node::Leaf { value } => value.len() == leaf,
        })
    };
    let ok = match &m.params {
        ModelParams::Logistic(p) => rows_ok(&p.weights) && p.bias.len() == k,
        ModelParams::NaiveBayes(p) => p.log_priors.len() == k && rows_ok(&p.means) && rows_ok(&p.variances),
        ModelParams::Knn(p) => p.points.cols() == d && p.k >= 1 && p.k <= p.points.rows(),
        ModelParams::Tree(t) => tree_ok(t, k),
        ModelParams::Forest(p) => !p.trees.is_empty() && p.trees.iter().all(|t| tree_ok(t, k)),
        ModelParams::AdaBoost(p) => {
            p.stumps.len() == p.alphas.len() && p.stumps.iter().all(|t| tree_ok(t, k))
        }
        ModelParams::Gbt(p) => {
            p.init_scores.len() == k && p.rounds.iter().all(|r| r.len() == k && r.iter().all(|t| tree_ok(t, 1)))
        }
        ModelParams::Svm(p) => rows_ok(&p.weights) && p.bias.len() == k,
    };
    if ok {
        Ok(())
    } else {
        bad("parameter shapes")
    }
}

pub fn model_to_bytes(m: &TrainedModel) -> Vec<u8> {
    let mut body = Out::default();
    write_body(m, &mut body);
    let mut out = Vec::with_capacity(HEADER_LEN + body.0.len() + 4);
    out.extend_from_slice(MAGIC);
    out.push(FORMAT_VERSION);
    out.push(m.spec.kind.code());
    out.extend_from_slice(&(body.0.len() as u64).to_le_bytes());
    out.extend_from_slice(&body.0);
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<TrainedModel, LearnError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(corrupt("missing FSNT magic"));
    }
    if bytes.len() < 5 {
        return Err(corrupt("truncated header"));
    }
    if bytes[4] != FORMAT_VERSION {
        return Err(LearnError::VersionMismatch {
            found: bytes[4],
            expected: FORMAT_VERSION,
        });
    }
    if bytes.len() < HEADER_LEN + 4 {
        return Err(corrupt("truncated header"));
    }
    let body_len = u64::from_le_bytes(bytes[6..14].try_into().expect("8 bytes"));
    let expected_len = (HEADER_LEN as u64).checked_add(body_len).and_then(|v| v.checked_add(4));
    if expected_len != Some(bytes.len() as u64) {
        return Err(corrupt("file length does not match header"));
    }
    let split = bytes.len() - 4;
    let stored = u32::from_le_bytes(bytes[split..].try_into().expect("4 bytes"));
    if crc32fast::hash(&bytes[..split]) != stored {
        return Err(corrupt("checksum mismatch"));
    }
    let kind = EstimatorKind::from_code(bytes[5]).ok_or_else(|| corrupt("unknown estimator kind"))?;
    read_body(
        kind,
        &mut In {
            buf: &bytes[HEADER_LEN..split],
            pos: 0,
        },
    )
}

/// Write via a temporary sibling and rename, so readers never observe a
/// partial file.
pub fn save_model(m: &TrainedModel, path: impl AsRef<Path>) -> Result<(), LearnError> {
    let path = path.as_ref();
    let bytes = model_to_bytes(m);
    let mut tmp_name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel, LearnError> {
    model_from_bytes(&fs::read(path)?)
}
