//! Flow-record data model and CICFlowMeter-style CSV ingestion.
//!
//! A [`Dataset`] is a fixed [`FeatureSchema`] plus an ordered list of
//! [`FlowRecord`]s. Every feature is stored as an `f64`, ports and protocol
//! numbers included, so the rest of the pipeline can treat a record as a plain
//! numeric vector.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of traffic classes in the label taxonomy.
pub const NUM_CLASSES: usize = 4;

/// Name of the optional label column in flow CSV files.
pub const LABEL_COLUMN: &str = "Label";

/// The default 24-column feature schema used by every downstream stage.
pub const CANONICAL_FEATURES: [&str; 24] = [
    "Source Port",
    "Destination Port",
    "Protocol",
    "Flow Duration",
    "Total Fwd Packets",
    "Total Backward Packets",
    "Total Length of Fwd Packets",
    "Total Length of Bwd Packets",
    "Fwd Packet Length Max",
    "Fwd Packet Length Min",
    "Fwd Packet Length Mean",
    "Fwd Packet Length Std",
    "Bwd Packet Length Max",
    "Bwd Packet Length Min",
    "Bwd Packet Length Mean",
    "Flow Bytes/s",
    "Flow Packets/s",
    "Flow IAT Mean",
    "Flow IAT Std",
    "Flow IAT Max",
    "Flow IAT Min",
    "Fwd IAT Mean",
    "Bwd IAT Mean",
    "Packet Length Mean",
];

#[derive(Debug, Error)]
pub enum FlowDataError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("unexpected column {0:?} (strict schema)")]
    UnexpectedColumn(String),
    #[error("duplicate column {0:?}")]
    DuplicateColumn(String),
    #[error("cannot parse {value:?} at row {row}, column {column:?}")]
    UnparsableCell {
        row: usize,
        column: String,
        value: String,
    },
    #[error("file contains no data rows")]
    EmptyFile,
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("dataset is not labeled")]
    NotLabeled,
    #[error("sample of {requested} requested from {available} records")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("record {index} has {got} values, schema has {expected}")]
    WidthMismatch {
        index: usize,
        got: usize,
        expected: usize,
    },
}

/// One of the four traffic classes. The discriminant is the class id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClassLabel {
    #[serde(rename = "BENIGN")]
    Benign = 0,
    #[serde(rename = "DDoS-DNS")]
    DdosDns = 1,
    #[serde(rename = "DDoS-NTP")]
    DdosNtp = 2,
    #[serde(rename = "DDoS-UDP")]
    DdosUdp = 3,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; NUM_CLASSES] = [
        ClassLabel::Benign,
        ClassLabel::DdosDns,
        ClassLabel::DdosNtp,
        ClassLabel::DdosUdp,
    ];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Option<ClassLabel> {
        Self::ALL.get(id).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassLabel::Benign => "BENIGN",
            ClassLabel::DdosDns => "DDoS-DNS",
            ClassLabel::DdosNtp => "DDoS-NTP",
            ClassLabel::DdosUdp => "DDoS-UDP",
        }
    }

    /// Benign is the only non-attack class.
    pub fn is_attack(self) -> bool {
        self != ClassLabel::Benign
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Parse a label string. Matching is case-insensitive after trimming.
///
/// The reflection-attack spellings used by the public CICDDoS2019 CSVs
/// (`DrDoS_DNS`, `DrDoS_NTP`, `DrDoS_UDP`) are accepted as aliases.
pub fn encode_label(raw: &str) -> Result<ClassLabel, FlowDataError> {
    let norm = raw.trim().to_ascii_lowercase();
    let label = match norm.as_str() {
        "benign" => ClassLabel::Benign,
        "ddos-dns" | "drdos_dns" => ClassLabel::DdosDns,
        "ddos-ntp" | "drdos_ntp" => ClassLabel::DdosNtp,
        "ddos-udp" | "drdos_udp" => ClassLabel::DdosUdp,
        _ => return Err(FlowDataError::UnknownLabel(raw.to_string())),
    };
    Ok(label)
}

/// Ordered, duplicate-free list of feature names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct FeatureSchema {
    names: Arc<[String]>,
}

impl TryFrom<Vec<String>> for FeatureSchema {
    type Error = FlowDataError;

    fn try_from(names: Vec<String>) -> Result<Self, FlowDataError> {
        Self::new(names)
    }
}

impl From<FeatureSchema> for Vec<String> {
    fn from(s: FeatureSchema) -> Self {
        s.names.to_vec()
    }
}

impl FeatureSchema {
    pub fn new<I, S>(names: I) -> Result<Self, FlowDataError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        let mut seen = HashSet::new();
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(FlowDataError::DuplicateColumn(n.clone()));
            }
        }
        Ok(Self {
            names: names.into(),
        })
    }

    pub fn canonical() -> Self {
        Self::new(CANONICAL_FEATURES).expect("canonical names are unique")
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn count(&self) -> usize {
        self.names.len()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub values: Vec<f64>,
    pub label: Option<ClassLabel>,
}

impl FlowRecord {
    pub fn new(values: Vec<f64>, label: Option<ClassLabel>) -> Self {
        Self { values, label }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Records sharing one schema. Immutable once constructed.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: FeatureSchema,
    records: Vec<FlowRecord>,
    labeled: bool,
}

impl Dataset {
    pub fn new(schema: FeatureSchema, records: Vec<FlowRecord>) -> Result<Self, FlowDataError> {
        for (index, r) in records.iter().enumerate() {
            if r.values.len() != schema.count() {
                return Err(FlowDataError::WidthMismatch {
                    index,
                    got: r.values.len(),
                    expected: schema.count(),
                });
            }
        }
        let labeled = !records.is_empty() && records.iter().all(|r| r.label.is_some());
        Ok(Self {
            schema,
            records,
            labeled,
        })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn records(&self) -> &[FlowRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<FlowRecord> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn labeled(&self) -> bool {
        self.labeled
    }

    /// Labels of a labeled dataset, in record order.
    pub fn labels(&self) -> Result<Vec<ClassLabel>, FlowDataError> {
        self.records
            .iter()
            .map(|r| r.label.ok_or(FlowDataError::NotLabeled))
            .collect()
    }

    pub fn class_counts(&self) -> [usize; NUM_CLASSES] {
        let mut counts = [0; NUM_CLASSES];
        for r in &self.records {
            if let Some(l) = r.label {
                counts[l.id()] += 1;
            }
        }
        counts
    }

    /// New dataset over the same schema holding the records at `indices`.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let records = indices.iter().map(|&i| self.records[i].clone()).collect();
        Dataset::new(self.schema.clone(), records).expect("same schema")
    }
}

/// How the header of a CSV file is matched against the expected schema.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemaMode {
    /// Feature columns must be exactly the expected schema, in order.
    Strict,
    /// Expected columns are picked by name; all other columns are dropped.
    ProjectToCanonical,
}

/// Load a CSV file against the canonical 24-feature schema.
pub fn load_csv(path: impl AsRef<Path>, mode: SchemaMode) -> Result<Dataset, FlowDataError> {
    load_csv_with_schema(path, &FeatureSchema::canonical(), mode)
}

pub fn load_csv_with_schema(
    path: impl AsRef<Path>,
    schema: &FeatureSchema,
    mode: SchemaMode,
) -> Result<Dataset, FlowDataError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| FlowDataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_csv(file, schema, mode)
}

/// Parse CSV text from any reader. Header names are trimmed before matching.
pub fn read_csv<R: std::io::Read>(
    reader: R,
    schema: &FeatureSchema,
    mode: SchemaMode,
) -> Result<Dataset, FlowDataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();

    let label_col = header.iter().position(|h| h == LABEL_COLUMN);
    let mut by_name: HashMap<&str, usize> = HashMap::new();
    for (i, h) in header.iter().enumerate() {
        if Some(i) == label_col {
            continue;
        }
        if by_name.insert(h.as_str(), i).is_some() && mode == SchemaMode::Strict {
            return Err(FlowDataError::DuplicateColumn(h.clone()));
        }
    }

    let columns: Vec<usize> = match mode {
        SchemaMode::Strict => {
            let feature_cols: Vec<usize> =
                (0..header.len()).filter(|&i| Some(i) != label_col).collect();
            for (pos, name) in schema.names().iter().enumerate() {
                match feature_cols.get(pos) {
                    Some(&c) if header[c] == *name => {}
                    _ if !by_name.contains_key(name.as_str()) => {
                        return Err(FlowDataError::MissingColumn(name.clone()))
                    }
                    Some(&c) => return Err(FlowDataError::UnexpectedColumn(header[c].clone())),
                    None => return Err(FlowDataError::MissingColumn(name.clone())),
                }
            }
            if let Some(&extra) = feature_cols.get(schema.count()) {
                return Err(FlowDataError::UnexpectedColumn(header[extra].clone()));
            }
            feature_cols
        }
        SchemaMode::ProjectToCanonical => schema
            .names()
            .iter()
            .map(|name| {
                by_name
                    .get(name.as_str())
                    .copied()
                    .ok_or_else(|| FlowDataError::MissingColumn(name.clone()))
            })
            .collect::<Result<_, _>>()?,
    };

    let mut records = Vec::new();
    for (row_idx, row) in rdr.records().enumerate() {
        let row = row?;
        // 1-based data row number, header excluded
        let row_no = row_idx + 1;
        let mut values = Vec::with_capacity(columns.len());
        for &c in &columns {
            let cell = row.get(c).unwrap_or("");
            values.push(parse_cell(cell).ok_or_else(|| FlowDataError::UnparsableCell {
                row: row_no,
                column: header[c].clone(),
                value: cell.to_string(),
            })?);
        }
        let label = match label_col {
            Some(c) => Some(encode_label(row.get(c).unwrap_or(""))?),
            None => None,
        };
        records.push(FlowRecord { values, label });
    }
    if records.is_empty() {
        return Err(FlowDataError::EmptyFile);
    }
    Dataset::new(schema.clone(), records)
}

/// Numeric cell parser. Empty cells are missing values and read as NaN.
fn parse_cell(cell: &str) -> Option<f64> {
    let t = cell.trim();
    if t.is_empty() {
        return Some(f64::NAN);
    }
    // f64::from_str already accepts inf/infinity/nan in any case
    t.parse::<f64>().ok()
}

/// Write a dataset in the same CSV format `load_csv` reads. Values are
/// written in shortest round-trip form, so reading them back is exact.
pub fn write_csv(d: &Dataset, path: impl AsRef<Path>) -> Result<(), FlowDataError> {
    let path = path.as_ref();
    let io_err = |source| FlowDataError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    write_csv_to(d, &mut w).map_err(io_err)?;
    w.flush().map_err(io_err)
}

pub fn write_csv_to<W: Write>(d: &Dataset, w: &mut W) -> std::io::Result<()> {
    let with_label = d.labeled();
    let mut header = d.schema().names().join(",");
    if with_label {
        header.push(',');
        header.push_str(LABEL_COLUMN);
    }
    writeln!(w, "{header}")?;
    let mut line = String::new();
    for r in d.records() {
        line.clear();
        for (i, v) in r.values.iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            line.push_str(&format_value(*v));
        }
        if let (true, Some(l)) = (with_label, r.label) {
            line.push(',');
            line.push_str(l.name());
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

fn format_value(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "Infinity" } else { "-Infinity" }.to_string()
    } else {
        format!("{v:?}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureSummary {
    pub name: String,
    /// Statistics over finite cells only; `None` when a column has none.
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetSummary {
    pub records: usize,
    pub class_counts: [usize; NUM_CLASSES],
    pub unlabeled: usize,
    pub features: Vec<FeatureSummary>,
    pub non_finite_cells: usize,
    /// Records that exactly repeat an earlier (values, label) tuple.
    pub duplicate_count: usize,
}

pub fn summarize(d: &Dataset) -> DatasetSummary {
    let width = d.schema().count();
    let mut min = vec![f64::INFINITY; width];
    let mut max = vec![f64::NEG_INFINITY; width];
    let mut sum = vec![0.0; width];
    let mut finite = vec![0usize; width];
    let mut non_finite_cells = 0;
    for r in d.records() {
        for (j, &v) in r.values.iter().enumerate() {
            if v.is_finite() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
                sum[j] += v;
                finite[j] += 1;
            } else {
                non_finite_cells += 1;
            }
        }
    }
    let features = d
        .schema()
        .names()
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let any = finite[j] > 0;
            FeatureSummary {
                name: name.clone(),
                min: any.then_some(min[j]),
                max: any.then_some(max[j]),
                mean: any.then(|| sum[j] / finite[j] as f64),
            }
        })
        .collect();

    let mut seen = HashSet::new();
    let duplicate_count = d
        .records()
        .iter()
        .filter(|r| !seen.insert(record_key(r)))
        .count();

    DatasetSummary {
        records: d.len(),
        class_counts: d.class_counts(),
        unlabeled: d.records().iter().filter(|r| r.label.is_none()).count(),
        features,
        non_finite_cells,
        duplicate_count,
    }
}

/// Exact identity key of a record: value bit patterns plus label.
pub(crate) fn record_key(r: &FlowRecord) -> (Vec<u64>, Option<ClassLabel>) {
    (r.values.iter().map(|v| v.to_bits()).collect(), r.label)
}

/// Split `target` across buckets proportionally to `counts` using the
/// largest-remainder method. Remainder ties go to the lower bucket index.
pub(crate) fn apportion(counts: &[usize], target: usize) -> Vec<usize> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return vec![0; counts.len()];
    }
    // exact integer arithmetic: quota_c = counts_c * target / total
    let mut alloc: Vec<usize> = counts.iter().map(|&c| c * target / total).collect();
    let mut rema: Vec<(usize, usize)> = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| (c * target % total, i))
        .collect();
    rema.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut left = target - alloc.iter().sum::<usize>();
    for &(r, i) in &rema {
        if left == 0 {
            break;
        }
        if r > 0 && alloc[i] < counts[i] {
            alloc[i] += 1;
            left -= 1;
        }
    }
    alloc
}

/// Per-class index lists of a labeled dataset, in record order.
pub(crate) fn class_indices(d: &Dataset) -> [Vec<usize>; NUM_CLASSES] {
    let mut out: [Vec<usize>; NUM_CLASSES] = Default::default();
    for (i, r) in d.records().iter().enumerate() {
        if let Some(l) = r.label {
            out[l.id()].push(i);
        }
    }
    out
}

/// Draw `n` records preserving class proportions (within one record per
/// class). Selected records keep their original relative order.
pub fn stratified_sample(d: &Dataset, n: usize, seed: u64) -> Result<Dataset, FlowDataError> {
    if !d.labeled() {
        return Err(FlowDataError::NotLabeled);
    }
    if n > d.len() {
        return Err(FlowDataError::SampleTooLarge {
            requested: n,
            available: d.len(),
        });
    }
    let mut per_class = class_indices(d);
    let counts: Vec<usize> = per_class.iter().map(Vec::len).collect();
    let alloc = apportion(&counts, n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = Vec::with_capacity(n);
    for (idx, take) in per_class.iter_mut().zip(alloc) {
        idx.shuffle(&mut rng);
        chosen.extend_from_slice(&idx[..take]);
    }
    chosen.sort_unstable();
    Ok(d.select(&chosen))
}
