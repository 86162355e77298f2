//! HTTP front end: classification, status and operator control routes.

use std::future::Future;
use std::path::{Path as FsPath, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use fsnt_core::flowdata::{ClassLabel, NUM_CLASSES};
use fsnt_core::learn::{argmax, load_model, LearnError, TrainedModel};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;
use tokio::net::TcpListener;
use tower_http::cors::CorsLayer;

use crate::blocklist::{validate_source, BlockEntry, BlockList, BlockListError};
use crate::config::{ConfigPatch, RuntimeConfig, ServiceConfig};
use crate::decision::{decide, Decision};
use crate::stats::{StatsWindow, TimelineBucket, WindowSummary};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error("cannot load model {path}: {source}")]
    Model { path: PathBuf, source: LearnError },
    #[error(transparent)]
    BlockList(#[from] BlockListError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// A loaded model plus the identity stamped on every response it serves.
#[derive(Debug)]
pub struct ActiveModel {
    pub id: String,
    pub model: TrainedModel,
    pub path: Option<PathBuf>,
}

pub struct AppState {
    model: RwLock<Option<Arc<ActiveModel>>>,
    model_seq: AtomicU64,
    runtime: RwLock<RuntimeConfig>,
    blocklist: RwLock<Arc<BlockList>>,
    blocklist_path: Option<PathBuf>,
    // serializes blocklist mutations including their disk write
    blocklist_writer: tokio::sync::Mutex<()>,
    stats: Mutex<StatsWindow>,
    flow_seq: AtomicU64,
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl AppState {
    pub fn new(runtime: RuntimeConfig, blocklist: BlockList, blocklist_path: Option<PathBuf>) -> Self {
        Self {
            model: RwLock::new(None),
            model_seq: AtomicU64::new(0),
            runtime: RwLock::new(runtime),
            blocklist: RwLock::new(Arc::new(blocklist)),
            blocklist_path,
            blocklist_writer: tokio::sync::Mutex::new(()),
            stats: Mutex::new(StatsWindow::new(runtime.window_seconds)),
            flow_seq: AtomicU64::new(0),
        }
    }

    /// Validate the config, restore the blocklist and load the initial model.
    pub fn from_config(cfg: &ServiceConfig) -> Result<Self, ServiceError> {
        cfg.runtime.validate()?;
        let list = match &cfg.blocklist_path {
            Some(p) => BlockList::load(p)?,
            None => BlockList::default(),
        };
        let state = Self::new(cfg.runtime, list, cfg.blocklist_path.clone());
        if let Some(p) = &cfg.model_path {
            let m = load_model(p).map_err(|source| ServiceError::Model {
                path: p.clone(),
                source,
            })?;
            state.install(m, Some(p.clone()));
        }
        Ok(state)
    }

    /// Swap in a new model. Requests in flight keep the model they started with.
    pub fn install(&self, model: TrainedModel, path: Option<PathBuf>) -> Arc<ActiveModel> {
        let seq = self.model_seq.fetch_add(1, Ordering::Relaxed) + 1;
        let active = Arc::new(ActiveModel {
            id: format!("{}#{seq}", model.kind()),
            model,
            path,
        });
        *self.model.write() = Some(Arc::clone(&active));
        active
    }

    pub fn active_model(&self) -> Option<Arc<ActiveModel>> {
        self.model.read().clone()
    }

    pub fn runtime(&self) -> RuntimeConfig {
        *self.runtime.read()
    }

    pub fn blocklist(&self) -> Arc<BlockList> {
        Arc::clone(&self.blocklist.read())
    }

    /// Apply `f` to a copy of the list, persist it, then publish it. The new
    /// list is visible only once it is on disk.
    async fn mutate_blocklist<T>(&self, f: impl FnOnce(&mut BlockList) -> T) -> Result<T, BlockListError> {
        let _guard = self.blocklist_writer.lock().await;
        let mut next = (*self.blocklist()).clone();
        let out = f(&mut next);
        let next = Arc::new(next);
        if let Some(path) = self.blocklist_path.clone() {
            let snapshot = Arc::clone(&next);
            tokio::task::spawn_blocking(move || snapshot.save(&path))
                .await
                .map_err(|e| BlockListError::Io(std::io::Error::other(e)))??;
        }
        *self.blocklist.write() = next;
        Ok(out)
    }
}

struct ApiError {
    status: StatusCode,
    message: String,
    field: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
            field: None,
        }
    }

    fn field(field: &str, message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            message: message.into(),
            field: Some(field.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = match self.field {
            Some(f) => json!({ "error": self.message, "field": f }),
            None => json!({ "error": self.message }),
        };
        (self.status, Json(body)).into_response()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionResponse {
    pub flow_id: String,
    pub class_id: usize,
    pub label: String,
    pub probabilities: [f64; NUM_CLASSES],
    pub ddos: bool,
    pub decision: Decision,
    pub latency_ms: f64,
    pub model_id: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DdosStatus {
    pub ddos: bool,
    pub accuracy: f64,
    pub calculation_time_s: f64,
    pub window: WindowSummary,
    pub timeline: Vec<TimelineBucket>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelInfo {
    pub loaded: bool,
    pub model_id: Option<String>,
    pub kind: Option<String>,
    pub path: Option<PathBuf>,
    pub accuracy: Option<f64>,
    pub calculation_time_s: Option<f64>,
    pub macro_auc: Option<f64>,
    pub features: Option<Vec<String>>,
}

impl ModelInfo {
    fn of(active: Option<&ActiveModel>) -> Self {
        let Some(a) = active else {
            return Self {
                loaded: false,
                model_id: None,
                kind: None,
                path: None,
                accuracy: None,
                calculation_time_s: None,
                macro_auc: None,
                features: None,
            };
        };
        let ev = a.model.meta.evaluation.as_ref();
        Self {
            loaded: true,
            model_id: Some(a.id.clone()),
            kind: Some(a.model.kind().name().to_string()),
            path: a.path.clone(),
            accuracy: ev.map(|e| e.accuracy),
            calculation_time_s: ev.map(|e| e.execution_time_s),
            macro_auc: ev.map(|e| e.macro_auc),
            features: Some(a.model.input_schema.names().to_vec()),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelSwap {
    path: PathBuf,
}

#[derive(Debug, Serialize)]
struct BlockListBody {
    count: usize,
    entries: Vec<BlockEntry>,
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/classify", post(classify))
        .route("/ddos/result", get(ddos_result))
        .route("/model", get(get_model).put(put_model))
        .route("/config", get(get_config).put(put_config))
        .route("/blocklist", get(get_blocklist))
        .route("/blocklist/{source}", put(put_source).delete(delete_source))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

struct ParsedRequest {
    values: Vec<f64>,
    flow_id: Option<String>,
    source: Option<String>,
}

fn parse_detection(body: &[u8], names: &[String]) -> Result<ParsedRequest, ApiError> {
    let v: Value = serde_json::from_slice(body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("malformed JSON: {e}")))?;
    let obj = v
        .as_object()
        .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "request body must be a JSON object"))?;
    let features = obj
        .get("features")
        .and_then(Value::as_object)
        .ok_or_else(|| ApiError::field("features", "missing or non-object field \"features\""))?;
    let mut values = Vec::with_capacity(names.len());
    for name in names {
        let x = match features.get(name) {
            None => return Err(ApiError::field(name, format!("missing feature {name:?}"))),
            Some(x) => x.as_f64().filter(|x| x.is_finite()),
        };
        values.push(x.ok_or_else(|| ApiError::field(name, format!("feature {name:?} must be a finite number")))?);
    }
    let flow_id = match obj.get("flow_id") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(Value::Number(n)) => Some(n.to_string()),
        Some(_) => return Err(ApiError::field("flow_id", "flow_id must be a string or number")),
    };
    let source = match obj.get("source") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => {
            validate_source(s).map_err(|e| ApiError::field("source", e.to_string()))?;
            Some(s.clone())
        }
        Some(_) => return Err(ApiError::field("source", "source must be a string")),
    };
    Ok(ParsedRequest {
        values,
        flow_id,
        source,
    })
}

async fn classify(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<DetectionResponse>, ApiError> {
    let started = Instant::now();
    // one snapshot per request: the whole response comes from this model
    let active = state
        .active_model()
        .ok_or_else(|| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "no model loaded"))?;
    let req = parse_detection(&body, active.model.input_schema.names())?;
    let proba = active
        .model
        .predict_proba(&req.values)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?;
    let class = ClassLabel::from_id(argmax(&proba)).unwrap_or(ClassLabel::Benign);
    let threshold = state.runtime().threshold;
    let decision = decide(class, &proba, req.source.as_deref(), threshold, &state.blocklist());
    state.stats.lock().record(unix_now(), class, decision);

    let flow_id = req
        .flow_id
        .unwrap_or_else(|| format!("f{}", state.flow_seq.fetch_add(1, Ordering::Relaxed) + 1));
    Ok(Json(DetectionResponse {
        flow_id,
        class_id: class.id(),
        label: class.name().to_string(),
        probabilities: proba,
        ddos: class.is_attack(),
        decision,
        latency_ms: started.elapsed().as_secs_f64() * 1e3,
        model_id: active.id.clone(),
    }))
}

async fn ddos_result(State(state): State<Arc<AppState>>) -> Json<DdosStatus> {
    let snap = state.stats.lock().snapshot(unix_now());
    let ev = state
        .active_model()
        .and_then(|a| a.model.meta.evaluation);
    Json(DdosStatus {
        ddos: snap.window.blocked > 0,
        accuracy: ev.as_ref().map_or(0.0, |e| e.accuracy),
        calculation_time_s: ev.as_ref().map_or(0.0, |e| e.execution_time_s),
        window: snap.window,
        timeline: snap.timeline,
    })
}

async fn get_model(State(state): State<Arc<AppState>>) -> Json<ModelInfo> {
    Json(ModelInfo::of(state.active_model().as_deref()))
}

async fn put_model(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<ModelInfo>, ApiError> {
    let swap: ModelSwap = serde_json::from_slice(&body)
        .map_err(|e| ApiError::field("path", format!("expected {{\"path\": string}}: {e}")))?;
    let path = swap.path;
    if !FsPath::new(&path).is_file() {
        return Err(ApiError::field("path", format!("no model file at {}", path.display())));
    }
    let p = path.clone();
    let loaded = tokio::task::spawn_blocking(move || load_model(&p))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    let model = match loaded {
        Ok(m) => m,
        Err(LearnError::Io(e)) => return Err(ApiError::field("path", e.to_string())),
        Err(e) => return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string())),
    };
    let active = state.install(model, Some(path));
    tracing::info!(model_id = %active.id, "model swapped");
    Ok(Json(ModelInfo::of(Some(&active))))
}

async fn get_config(State(state): State<Arc<AppState>>) -> Json<RuntimeConfig> {
    Json(state.runtime())
}

async fn put_config(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<RuntimeConfig>, ApiError> {
    let patch: ConfigPatch = serde_json::from_slice(&body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("invalid config body: {e}")))?;
    let mut rt = state.runtime.write();
    let next = patch.apply(*rt).map_err(|e| {
        let field = match e {
            crate::config::ConfigError::Threshold(_) => "threshold",
            _ => "window_seconds",
        };
        ApiError::field(field, e.to_string())
    })?;
    if next.window_seconds != rt.window_seconds {
        state.stats.lock().set_window(next.window_seconds);
    }
    *rt = next;
    Ok(Json(next))
}

async fn get_blocklist(State(state): State<Arc<AppState>>) -> Json<BlockListBody> {
    let list = state.blocklist();
    Json(BlockListBody {
        count: list.len(),
        entries: list.entries(),
    })
}

fn persist_error(e: BlockListError) -> ApiError {
    ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
}

async fn put_source(
    State(state): State<Arc<AppState>>,
    Path(source): Path<String>,
) -> Result<Json<BlockEntry>, ApiError> {
    validate_source(&source).map_err(|e| ApiError::field("source", e.to_string()))?;
    let now = unix_now();
    let src = source.clone();
    let entry = state
        .mutate_blocklist(move |l| {
            l.insert(&src, now);
            l.get(&src)
        })
        .await
        .map_err(persist_error)?;
    entry
        .map(Json)
        .ok_or_else(|| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "insert failed"))
}

async fn delete_source(
    State(state): State<Arc<AppState>>,
    Path(source): Path<String>,
) -> Result<StatusCode, ApiError> {
    let src = source.clone();
    let removed = state
        .mutate_blocklist(move |l| l.remove(&src))
        .await
        .map_err(persist_error)?;
    if removed {
        Ok(StatusCode::NO_CONTENT)
    } else {
        Err(ApiError::new(StatusCode::NOT_FOUND, format!("{source:?} is not blocklisted")))
    }
}

/// Serve on an already-bound listener until `shutdown` resolves.
pub async fn serve_on(
    listener: TcpListener,
    state: Arc<AppState>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
}

/// Bind the configured address and serve until Ctrl-C.
pub async fn run(cfg: ServiceConfig) -> Result<(), ServiceError> {
    cfg.validate()?;
    let state = Arc::new(AppState::from_config(&cfg)?);
    let listener = TcpListener::bind(cfg.listen).await?;
    tracing::info!(addr = %listener.local_addr()?, "detection service listening");
    serve_on(listener, state, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await?;
    Ok(())
}
