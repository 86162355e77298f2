#![allow(dead_code)]

use std::net::SocketAddr;
use std::sync::{Arc, OnceLock};

use fsnt_core::eval::EvalOptions;
use fsnt_core::flowdata::Dataset;
use fsnt_core::learn::{EstimatorKind, EstimatorSpec, TrainedModel};
use fsnt_core::pipeline::{prepare, train_model, PipelineConfig};
use fsnt_core::trafficgen::{generate_dataset, GeneratorSpec};
use fsnt_detectd::blocklist::BlockList;
use fsnt_detectd::{serve_on, AppState, RuntimeConfig};
use serde_json::{Map, Value};
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

pub struct TestServer {
    pub base: String,
    pub addr: SocketAddr,
    pub state: Arc<AppState>,
    stop: Option<oneshot::Sender<()>>,
    handle: Option<JoinHandle<std::io::Result<()>>>,
}

impl TestServer {
    pub async fn start(state: AppState) -> Self {
        let state = Arc::new(state);
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let addr = listener.local_addr().unwrap();
        let (tx, rx) = oneshot::channel();
        let handle = tokio::spawn(serve_on(listener, Arc::clone(&state), async {
            let _ = rx.await;
        }));
        Self {
            base: format!("http://{addr}"),
            addr,
            state,
            stop: Some(tx),
            handle: Some(handle),
        }
    }

    pub async fn with_model(model: TrainedModel) -> Self {
        let state = AppState::new(RuntimeConfig::default(), BlockList::default(), None);
        state.install(model, None);
        Self::start(state).await
    }

    pub async fn stop(mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        if let Some(h) = self.handle.take() {
            h.await.unwrap().unwrap();
        }
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }
}

pub fn corpus(per_class: usize, seed: u64) -> Dataset {
    generate_dataset(&GeneratorSpec::with_counts([per_class; 4], seed)).unwrap()
}

pub fn train(kind: EstimatorKind, d: &Dataset) -> TrainedModel {
    let cfg = PipelineConfig {
        eval: EvalOptions {
            repeats: 1,
            ..Default::default()
        },
        ..Default::default()
    };
    let p = prepare(d, &cfg).unwrap();
    let spec = match kind {
        EstimatorKind::Rf => EstimatorSpec::new(kind).with("trees", 30.0),
        EstimatorKind::Gbt => EstimatorSpec::new(kind).with("rounds", 20.0),
        _ => EstimatorSpec::new(kind),
    };
    train_model(&p, &spec, &cfg.eval).unwrap().0
}

/// Random forest and decision tree trained once on a small generator corpus.
pub fn models() -> &'static (TrainedModel, TrainedModel) {
    static M: OnceLock<(TrainedModel, TrainedModel)> = OnceLock::new();
    M.get_or_init(|| {
        let d = corpus(1500, 1);
        (train(EstimatorKind::Rf, &d), train(EstimatorKind::Dt, &d))
    })
}

pub fn body(d: &Dataset, row: usize) -> Value {
    let r = &d.records()[row];
    let features: Map<String, Value> = d
        .schema()
        .names()
        .iter()
        .zip(&r.values)
        .map(|(n, &v)| (n.clone(), Value::from(v)))
        .collect();
    serde_json::json!({ "features": features })
}
