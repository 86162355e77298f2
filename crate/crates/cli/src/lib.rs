//! The `fsnt` command: generate, preprocess, select-features, train,
//! evaluate, compare, serve and replay.

pub mod error;

use std::fmt::Write as _;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use fsnt_core::eval::{
    comparison_csv, evaluate, export_comparison, export_correlation, export_label_counts, export_report, EvalOptions,
    EvalReport,
};
use fsnt_core::features::{correlation_matrix, fit_pca, rank_features_by_loading, DEFAULT_COMPONENTS};
use fsnt_core::flowdata::{load_csv, summarize, write_csv, ClassLabel, Dataset, SchemaMode, CANONICAL_FEATURES};
use fsnt_core::learn::{load_model, save_model, EstimatorKind, EstimatorSpec};
use fsnt_core::pipeline::{compare, prepare, train_model, PipelineConfig};
use fsnt_core::preprocess::{apply_standardizer, dedup, drop_invalid, fit_standardizer, SplitSpec};
use fsnt_core::trafficgen::{generate_dataset, GeneratorSpec, DEFAULT_COUNTS};
use fsnt_detectd::{ReplayOptions, ReplayReport, RuntimeConfig, ServiceConfig};
use serde_json::{json, Value};

pub use error::{exit, CliError};

#[derive(Debug, Parser)]
#[command(name = "fsnt", version, about = "Flow-based DDoS detection toolkit")]
pub struct Cli {
    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a seeded synthetic flow corpus as CSV.
    Generate(GenerateArgs),
    /// Drop non-finite rows and duplicates, write the cleaned CSV.
    Preprocess(PreprocessArgs),
    /// Fit PCA on the cleaned, standardized corpus and rank the input features.
    SelectFeatures(SelectArgs),
    /// Train one model and write it with its evaluation report.
    Train(TrainArgs),
    /// Evaluate a saved model on a labelled CSV.
    Evaluate(EvaluateArgs),
    /// Train and rank several models on one shared split.
    Compare(CompareArgs),
    /// Run the detection service.
    Serve(ServeArgs),
    /// Post a labelled corpus to a running service and report detection rates.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, short)]
    pub out: PathBuf,
    /// Records per class: BENIGN,DNS,NTP,UDP.
    #[arg(long, value_delimiter = ',')]
    pub counts: Option<Vec<usize>>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Labelled flow CSV.
    #[arg(long, short)]
    pub input: PathBuf,
    /// Require the header to be exactly the canonical feature set.
    #[arg(long)]
    pub strict_schema: bool,
}

impl InputArgs {
    fn load(&self) -> Result<Dataset, CliError> {
        let mode = if self.strict_schema {
            SchemaMode::Strict
        } else {
            SchemaMode::ProjectToCanonical
        };
        Ok(load_csv(&self.input, mode)?)
    }
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, short)]
    pub out: PathBuf,
    /// Directory for label_counts.csv and summary.json.
    #[arg(long)]
    pub report_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(short, long, default_value_t = DEFAULT_COMPONENTS)]
    pub k: usize,
    #[arg(long)]
    pub report_dir: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct SplitArgs {
    #[arg(long, default_value_t = 0.6)]
    pub train_fraction: f64,
    #[arg(long, default_value_t = 42)]
    pub split_seed: u64,
    /// Shuffle without stratifying by class.
    #[arg(long)]
    pub unstratified: bool,
    /// PCA components.
    #[arg(short, long, default_value_t = DEFAULT_COMPONENTS)]
    pub k: usize,
    /// Train on standardized features without PCA.
    #[arg(long, conflicts_with = "k")]
    pub no_pca: bool,
    /// Prediction timing repeats.
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    /// Omit timing fields so reports are reproducible byte for byte.
    #[arg(long)]
    pub no_timing: bool,
}

impl SplitArgs {
    fn config(&self) -> Result<PipelineConfig, CliError> {
        let components = (!self.no_pca).then_some(self.k);
        if let Some(k) = components {
            if k == 0 || k > CANONICAL_FEATURES.len() {
                return Err(CliError::InvalidParam(format!(
                    "k = {k} outside 1..={}",
                    CANONICAL_FEATURES.len()
                )));
            }
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(CliError::InvalidParam(format!(
                "train fraction {} outside (0, 1)",
                self.train_fraction
            )));
        }
        Ok(PipelineConfig {
            split: SplitSpec {
                train_fraction: self.train_fraction,
                seed: self.split_seed,
                stratified: !self.unstratified,
            },
            components,
            standardize_on_all: false,
            eval: EvalOptions {
                repeats: self.repeats.max(1),
                timing: !self.no_timing,
                ..Default::default()
            },
        })
    }
}

fn parse_param(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected name=value, got {s:?}"))?;
    let v: f64 = v.trim().parse().map_err(|_| format!("{v:?} is not a number"))?;
    Ok((k.trim().to_string(), v))
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// LR, NB, KNN, DT, RF, ADABOOST, GBT or SVM.
    #[arg(long, short)]
    pub model: String,
    /// Hyperparameter override, repeatable: --param trees=200
    #[arg(long = "param", value_parser = parse_param)]
    pub params: Vec<(String, f64)>,
    /// Estimator seed.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[command(flatten)]
    pub split: SplitArgs,
    /// Model file to write.
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long)]
    pub report_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub model_file: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    #[arg(long)]
    pub no_timing: bool,
    #[arg(long)]
    pub report_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Comma-separated model kinds; all eight by default.
    #[arg(long, value_delimiter = ',')]
    pub models: Vec<String>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[command(flatten)]
    pub split: SplitArgs,
    #[arg(long)]
    pub report_dir: Option<PathBuf>,
    /// Also save every trained model here as `<kind>.fsnt`.
    #[arg(long)]
    pub models_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "FSNT_LISTEN", default_value = "127.0.0.1:5000")]
    pub listen: SocketAddr,
    #[arg(long, env = "FSNT_MODEL")]
    pub model: Option<PathBuf>,
    #[arg(long, env = "FSNT_THRESHOLD", default_value_t = 0.5)]
    pub threshold: f64,
    #[arg(long, env = "FSNT_BLOCKLIST_FILE")]
    pub blocklist_file: Option<PathBuf>,
    #[arg(long, env = "FSNT_WINDOW_SECONDS", default_value_t = 60)]
    pub window_seconds: u64,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Labelled CSV to replay.
    #[arg(long, short, conflicts_with = "generate")]
    pub input: Option<PathBuf>,
    /// Replay a generated corpus instead of a file.
    #[arg(long)]
    pub generate: bool,
    #[arg(long, value_delimiter = ',', requires = "generate")]
    pub counts: Option<Vec<usize>>,
    #[arg(long, default_value_t = 7, requires = "generate")]
    pub seed: u64,
    /// Service base URL.
    #[arg(long, default_value = "http://127.0.0.1:5000")]
    pub target: String,
    /// Flows per second; unpaced when omitted.
    #[arg(long)]
    pub rate: Option<f64>,
    #[arg(long)]
    pub shuffle_seed: Option<u64>,
    #[arg(long, default_value_t = 32)]
    pub max_in_flight: usize,
    /// Source identifier attached to every flow.
    #[arg(long)]
    pub source: Option<String>,
}

/// What a command prints on success.
pub struct Output {
    pub json: Value,
    pub text: String,
}

fn counts_arg(c: &Option<Vec<usize>>) -> Result<[usize; 4], CliError> {
    match c.as_deref() {
        None => Ok(DEFAULT_COUNTS),
        Some(&[a, b, c, d]) => Ok([a, b, c, d]),
        Some(v) => Err(CliError::Usage(format!("--counts needs 4 values, got {}", v.len()))),
    }
}

fn parse_kind(s: &str) -> Result<EstimatorKind, CliError> {
    s.parse::<EstimatorKind>().map_err(CliError::from)
}

fn build_spec(kind: EstimatorKind, params: &[(String, f64)], seed: u64) -> Result<EstimatorSpec, CliError> {
    let spec = params
        .iter()
        .fold(EstimatorSpec::new(kind).with_seed(seed), |s, (k, v)| s.with(k, *v));
    spec.validate()?;
    Ok(spec)
}

fn report_json(r: &EvalReport) -> Value {
    serde_json::to_value(r).expect("report serializes")
}

fn report_text(r: &EvalReport) -> String {
    let mut s = format!(
        "{}: accuracy {:.4}, macro AUC {:.4}",
        r.model,
        r.accuracy(),
        r.macro_auc
    );
    if let Some(t) = r.timing {
        write!(s, ", execution time {:.3} s", t.execution_time_s).unwrap();
    }
    s.push('\n');
    s.push_str("class,precision,recall,f1,support\n");
    for c in ClassLabel::ALL {
        let i = c.id();
        writeln!(
            s,
            "{c},{:.4},{:.4},{:.4},{}",
            r.metrics.precision[i], r.metrics.recall[i], r.metrics.f1[i], r.metrics.support[i]
        )
        .unwrap();
    }
    s
}

fn cmd_generate(a: &GenerateArgs) -> Result<Output, CliError> {
    let spec = GeneratorSpec::with_counts(counts_arg(&a.counts)?, a.seed);
    spec.validate()?;
    let d = generate_dataset(&spec)?;
    write_csv(&d, &a.out)?;
    let counts = d.class_counts();
    Ok(Output {
        json: json!({ "path": a.out, "rows": d.len(), "class_counts": counts, "seed": a.seed }),
        text: format!("wrote {} rows to {} (class counts {counts:?})\n", d.len(), a.out.display()),
    })
}

fn cmd_preprocess(a: &PreprocessArgs) -> Result<Output, CliError> {
    let raw = a.input.load()?;
    let summary = summarize(&raw);
    let (clean, dropped) = drop_invalid(&raw)?;
    let (clean, duplicates) = dedup(&clean);
    write_csv(&clean, &a.out)?;
    if let Some(dir) = &a.report_dir {
        export_label_counts(&clean, dir)?;
        fs::write(
            dir.join("summary.json"),
            serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n",
        )?;
    }
    Ok(Output {
        json: json!({
            "input_rows": raw.len(),
            "dropped_invalid": dropped,
            "duplicates": duplicates,
            "rows": clean.len(),
            "class_counts": clean.class_counts(),
            "path": a.out,
        }),
        text: format!(
            "{} rows in, {dropped} non-finite dropped, {duplicates} duplicates removed, {} rows written to {}\n",
            raw.len(),
            clean.len(),
            a.out.display()
        ),
    })
}

fn cmd_select(a: &SelectArgs) -> Result<Output, CliError> {
    if a.k == 0 || a.k > CANONICAL_FEATURES.len() {
        return Err(CliError::InvalidParam(format!("k = {} outside 1..={}", a.k, CANONICAL_FEATURES.len())));
    }
    let raw = a.input.load()?;
    let (clean, _) = drop_invalid(&raw)?;
    let (clean, _) = dedup(&clean);
    let z = apply_standardizer(&clean, &fit_standardizer(&clean)?)?;
    let pca = fit_pca(&z, a.k)?;
    let ranking = rank_features_by_loading(&pca, clean.schema())?;
    let evr = pca.explained_variance_ratio();
    if let Some(dir) = &a.report_dir {
        export_correlation(&correlation_matrix(&clean)?, dir)?;
        let mut r = String::from("rank,feature,score\n");
        for (i, (name, score)) in ranking.entries.iter().enumerate() {
            writeln!(r, "{},{name},{score:.6}", i + 1).unwrap();
        }
        fs::write(dir.join("feature_ranking.csv"), r)?;
        let mut v = String::from("component,eigenvalue,explained_variance_ratio\n");
        for (i, (e, ratio)) in pca.eigenvalues.iter().zip(&evr).enumerate() {
            writeln!(v, "PC{},{e:.6},{ratio:.6}", i + 1).unwrap();
        }
        fs::write(dir.join("pca_variance.csv"), v)?;
    }
    let mut text = format!(
        "PCA k={} retains {:.2}% of variance\n",
        a.k,
        100.0 * evr.iter().sum::<f64>()
    );
    for (i, (name, score)) in ranking.entries.iter().take(10).enumerate() {
        writeln!(text, "{:>2}. {name} ({score:.4})", i + 1).unwrap();
    }
    Ok(Output {
        json: json!({
            "k": a.k,
            "explained_variance_ratio": evr,
            "ranking": ranking.entries,
        }),
        text,
    })
}

fn cmd_train(a: &TrainArgs) -> Result<Output, CliError> {
    let spec = build_spec(parse_kind(&a.model)?, &a.params, a.seed)?;
    let cfg = a.split.config()?;
    let d = a.input.load()?;
    let p = prepare(&d, &cfg)?;
    let (model, report) = train_model(&p, &spec, &cfg.eval)?;
    save_model(&model, &a.out).map_err(CliError::model_file)?;
    if let Some(dir) = &a.report_dir {
        export_report(&report, dir)?;
    }
    Ok(Output {
        json: json!({ "model_path": a.out, "report": report_json(&report) }),
        text: format!("{}model written to {}\n", report_text(&report), a.out.display()),
    })
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<Output, CliError> {
    let model = load_model(&a.model_file).map_err(CliError::model_file)?;
    let raw = a.input.load()?;
    if !raw.labeled() {
        return Err(CliError::NotLabeled);
    }
    let (test, _) = drop_invalid(&raw)?;
    let opts = EvalOptions {
        repeats: a.repeats.max(1),
        timing: !a.no_timing,
        ..Default::default()
    };
    let report = evaluate(&model, &test, &opts)?;
    if let Some(dir) = &a.report_dir {
        export_report(&report, dir)?;
    }
    Ok(Output {
        json: report_json(&report),
        text: report_text(&report),
    })
}

fn cmd_compare(a: &CompareArgs) -> Result<Output, CliError> {
    let kinds: Vec<EstimatorKind> = if a.models.is_empty() {
        EstimatorKind::ALL.to_vec()
    } else {
        a.models.iter().map(|m| parse_kind(m)).collect::<Result<_, _>>()?
    };
    let specs: Vec<EstimatorSpec> = kinds
        .iter()
        .map(|&k| build_spec(k, &[], a.seed))
        .collect::<Result<_, _>>()?;
    let cfg = a.split.config()?;
    let d = a.input.load()?;
    let p = prepare(&d, &cfg)?;
    let (table, models) = compare(&p, &specs, &cfg.eval)?;
    if let Some(dir) = &a.report_dir {
        export_comparison(&table, dir)?;
    }
    if let Some(dir) = &a.models_dir {
        fs::create_dir_all(dir)?;
        for m in &models {
            let path = dir.join(format!("{}.fsnt", m.kind().name().to_lowercase()));
            save_model(m, path).map_err(CliError::model_file)?;
        }
    }
    Ok(Output {
        json: serde_json::to_value(&table.rows).expect("rows serialize"),
        text: comparison_csv(&table),
    })
}

fn serve_config(a: &ServeArgs) -> Result<ServiceConfig, CliError> {
    let cfg = ServiceConfig {
        listen: a.listen,
        model_path: a.model.clone(),
        blocklist_path: a.blocklist_file.clone(),
        runtime: RuntimeConfig {
            threshold: a.threshold,
            window_seconds: a.window_seconds,
        },
    };
    cfg.validate().map_err(|e| CliError::InvalidParam(e.to_string()))?;
    Ok(cfg)
}

fn runtime() -> Result<tokio::runtime::Runtime, CliError> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Other(format!("cannot start async runtime: {e}")))
}

fn cmd_serve(a: &ServeArgs) -> Result<Output, CliError> {
    let cfg = serve_config(a)?;
    if let Some(p) = &cfg.model_path {
        if !Path::new(p).is_file() {
            return Err(CliError::ModelFile(format!("no model file at {}", p.display())));
        }
    }
    runtime()?.block_on(fsnt_detectd::run(cfg))?;
    Ok(Output {
        json: json!({ "stopped": true }),
        text: "service stopped\n".into(),
    })
}

fn replay_text(r: &ReplayReport) -> String {
    let mut s = format!(
        "sent {} responses {} failures {} (allowed {}, blocked {}) in {:.2} s\n",
        r.sent, r.responses, r.failures, r.allowed, r.blocked, r.elapsed_s
    );
    for c in &r.per_class {
        if let Some(recall) = c.recall {
            writeln!(s, "{}: {} flows, decision recall {:.4}", c.label, c.flows, recall).unwrap();
        }
    }
    if let Some(v) = r.attack_recall {
        writeln!(s, "attack recall {v:.4}").unwrap();
    }
    if let Some(v) = r.benign_block_rate {
        writeln!(s, "benign block rate {v:.4}").unwrap();
    }
    if let Some(l) = &r.latency {
        writeln!(s, "latency p50 {:.2} ms, p99 {:.2} ms, max {:.2} ms", l.p50_ms, l.p99_ms, l.max_ms).unwrap();
    }
    s
}

fn cmd_replay(a: &ReplayArgs) -> Result<Output, CliError> {
    let d = match (&a.input, a.generate) {
        (Some(path), false) => load_csv(path, SchemaMode::ProjectToCanonical)?,
        (None, true) => generate_dataset(&GeneratorSpec::with_counts(counts_arg(&a.counts)?, a.seed))?,
        _ => return Err(CliError::Usage("replay needs exactly one of --input or --generate".into())),
    };
    let opts = ReplayOptions {
        rate: a.rate,
        max_in_flight: a.max_in_flight,
        shuffle_seed: a.shuffle_seed,
        source: a.source.clone(),
        ..Default::default()
    };
    let report = runtime()?.block_on(fsnt_detectd::replay(&d, &a.target, &opts))?;
    Ok(Output {
        json: serde_json::to_value(&report).expect("report serializes"),
        text: replay_text(&report),
    })
}

pub fn run(cli: &Cli) -> Result<Output, CliError> {
    match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Preprocess(a) => cmd_preprocess(a),
        Command::SelectFeatures(a) => cmd_select(a),
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Serve(a) => cmd_serve(a),
        Command::Replay(a) => cmd_replay(a),
    }
}

/// Parse `args`, run, write output, and return the process exit code.
pub fn main_with_args<I, T>(args: I, out: &mut dyn std::io::Write, err: &mut dyn std::io::Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::OK };
            let text = e.render().to_string();
            let _ = if code == exit::OK {
                write!(out, "{text}")
            } else {
                write!(err, "{text}")
            };
            return code;
        }
    };
    match run(&cli) {
        Ok(o) => {
            let _ = if cli.json {
                writeln!(out, "{}", serde_json::to_string_pretty(&o.json).expect("json"))
            } else {
                write!(out, "{}", o.text)
            };
            exit::OK
        }
        Err(e) => {
            let code = e.exit_code();
            let _ = if cli.json {
                writeln!(err, "{}", json!({ "error": e.to_string(), "exit_code": code }))
            } else {
                writeln!(err, "error: {e}")
            };
            code
        }
    }
}
