//! Local HTTP service for interactive generation: submit a box layout,
//! poll the job, get back the RGB image, the mask and per-sample SAE/EBR.

pub mod api;
pub mod engine;
pub mod jobs;
mod openapi;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::{HeaderValue, Method, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use boxforge_core::dataset::mask_palette;
use serde::{Deserialize, Serialize};
use tower_http::cors::CorsLayer;
use tower_http::services::ServeDir;

pub use api::{ErrorBody, FieldError, GenerateRequest, GenerationJob, GenerationResult, JobCreated, JobStatus};
pub use engine::{DiffusionEngine, SampleEngine};
pub use jobs::{JobQueue, JobStore, SubmitError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub host: String,
    pub port: u16,
    /// Jobs allowed to wait behind the running one.
    pub queue_depth: usize,
    /// Jobs kept in memory.
    pub lru_capacity: usize,
    /// Evicted jobs are written here and stay retrievable.
    pub spill_dir: Option<PathBuf>,
    /// Built UI bundle served at `/`.
    pub static_dir: Option<PathBuf>,
    pub cors_origins: Vec<String>,
    pub max_height: usize,
    pub max_width: usize,
    /// Upper bound on the chain length a request may ask for.
    pub max_steps: Option<usize>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8787,
            queue_depth: 16,
            lru_capacity: 128,
            spill_dir: None,
            static_dir: None,
            cors_origins: vec!["http://localhost:8787".into(), "http://127.0.0.1:8787".into()],
            max_height: 256,
            max_width: 256,
            max_steps: None,
        }
    }
}

#[derive(Clone)]
struct AppState {
    engine: Arc<dyn SampleEngine>,
    queue: Arc<JobQueue>,
    config: Arc<ServiceConfig>,
}

fn error(status: StatusCode, message: impl Into<String>, fields: Vec<FieldError>) -> Response {
    (
        status,
        Json(ErrorBody {
            error: message.into(),
            fields,
        }),
    )
        .into_response()
}

/// Field-level checks of a request against the loaded checkpoint.
pub fn validate_request(req: &GenerateRequest, engine: &dyn SampleEngine, cfg: &ServiceConfig) -> Vec<FieldError> {
    let mut errs = Vec::new();
    let mut push = |field: String, message: String| errs.push(FieldError { field, message });
    let k = engine.size_multiple().max(1);
    for (name, v, max) in [("height", req.height, cfg.max_height), ("width", req.width, cfg.max_width)] {
        if v == 0 || v > max {
            push(name.into(), format!("must be in 1..={max}, got {v}"));
        } else if v % k != 0 {
            push(name.into(), format!("must be a multiple of {k}, got {v}"));
        }
    }
    let alphabet = engine.alphabet();
    for (i, b) in req.boxes.iter().enumerate() {
        if b.class_id < 2 || !alphabet.contains(b.class_id) {
            push(
                format!("boxes[{i}].class"),
                format!("box {i}: class {} is not a defect class (2..={})", b.class_id, alphabet.num_classes()),
            );
        }
        if req.height > 0 && req.width > 0 {
            if let Err(e) = b.validate(i, req.height, req.width) {
                push(format!("boxes[{i}]"), format!("box {i}: {e}"));
            }
        }
    }
    let t = engine.num_steps();
    if let Some(s) = req.steps {
        if s != t {
            push("steps".into(), format!("must equal the checkpoint's chain length {t}, got {s}"));
        }
    }
    if let Some(max) = cfg.max_steps {
        let s = req.steps.unwrap_or(t);
        if s > max {
            push("steps".into(), format!("{s} exceeds the configured maximum {max}"));
        }
    }
    errs
}

async fn generate(State(st): State<AppState>, body: Result<Json<GenerateRequest>, axum::extract::rejection::JsonRejection>) -> Response {
    let Json(req) = match body {
        Ok(b) => b,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("invalid request body: {}", e.body_text()), vec![]),
    };
    let fields = validate_request(&req, st.engine.as_ref(), &st.config);
    if !fields.is_empty() {
        return error(StatusCode::BAD_REQUEST, "validation failed", fields);
    }
    match st.queue.submit(req) {
        Ok(job_id) => (StatusCode::ACCEPTED, Json(JobCreated { job_id })).into_response(),
        Err(SubmitError::QueueFull) => error(
            StatusCode::SERVICE_UNAVAILABLE,
            format!("queue full ({} jobs waiting)", st.config.queue_depth),
            vec![],
        ),
        Err(SubmitError::WorkerGone) => error(StatusCode::INTERNAL_SERVER_ERROR, "sampling worker stopped", vec![]),
    }
}

async fn job(State(st): State<AppState>, Path(id): Path<String>) -> Response {
    match st.queue.get(&id) {
        Some(j) => Json(j).into_response(),
        None => error(StatusCode::NOT_FOUND, format!("unknown job {id}"), vec![]),
    }
}

async fn meta(State(st): State<AppState>) -> Response {
    let a = st.engine.alphabet();
    let (dh, dw) = st.engine.native_size().unwrap_or((st.config.max_height.min(64), st.config.max_width.min(64)));
    Json(serde_json::json!({
        "alphabet": a,
        "class_names": a.class_names(),
        "num_classes": a.num_classes(),
        "bit_width": a.bit_width(),
        "palette": mask_palette(a.num_classes()),
        "max_height": st.config.max_height,
        "max_width": st.config.max_width,
        "default_height": dh,
        "default_width": dw,
        "size_multiple": st.engine.size_multiple(),
        "steps": st.engine.num_steps(),
        "queue_depth": st.config.queue_depth,
        "checkpoint": st.engine.describe(),
    }))
    .into_response()
}

async fn spec() -> Response {
    Json(openapi::document()).into_response()
}

async fn fallback_index() -> Html<&'static str> {
    Html("<!doctype html><title>boxforge</title><p>boxforge generation service. The UI bundle is not configured; see <a href=\"/api/spec\">/api/spec</a>.</p>")
}

/// Builds the router and starts the sampling worker.
pub fn app(engine: Arc<dyn SampleEngine>, config: ServiceConfig) -> Router {
    let queue = Arc::new(JobQueue::start(engine.clone(), config.queue_depth, config.lru_capacity, config.spill_dir.clone()));
    let origins: Vec<HeaderValue> = config.cors_origins.iter().filter_map(|o| HeaderValue::from_str(o).ok()).collect();
    let cors = CorsLayer::new()
        .allow_origin(origins)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([axum::http::header::CONTENT_TYPE]);
    let static_dir = config.static_dir.clone();
    let state = AppState {
        engine,
        queue,
        config: Arc::new(config),
    };
    let api = Router::new()
        .route("/api/generate", post(generate))
        .route("/api/jobs/{id}", get(job))
        .route("/api/meta", get(meta))
        .route("/api/spec", get(spec))
        .with_state(state);
    let router = match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(fallback_index)),
    };
    router.layer(cors)
}

/// Serves until the process is stopped.
pub async fn serve(engine: Arc<dyn SampleEngine>, config: ServiceConfig) -> std::io::Result<()> {
    let addr: SocketAddr = format!("{}:{}", config.host, config.port)
        .parse()
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidInput, format!("bad listen address: {e}")))?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{addr}");
    axum::serve(listener, app(engine, config)).await
}
