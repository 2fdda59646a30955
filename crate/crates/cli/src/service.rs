//! HTTP classification service.
//!
//! Requests read one immutable model snapshot; `/v1/reload` publishes a new
//! snapshot with a single atomic pointer swap, so every response comes from
//! exactly one model.

use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context};
use arc_swap::ArcSwap;
use axum::body::Bytes;
use axum::extract::rejection::BytesRejection;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use base64::Engine;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tokio::sync::{Mutex, Semaphore};

use modguard_core::classifiers::{predict, ClassifierKind, ClassifierModel};
use modguard_core::embedding::{decode_image, embed_images, embed_texts, EmbeddingBackend};
use modguard_core::textprep::clean_text;

pub const DEFAULT_MAX_BODY_BYTES: usize = 8 * 1024 * 1024;

/// A loaded model and the sha256 of the file it came from.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub model: ClassifierModel,
    pub model_hash: String,
}

impl Snapshot {
    pub fn load(path: &std::path::Path, threshold_override: Option<f64>) -> anyhow::Result<Self> {
        let bytes = std::fs::read(path).with_context(|| format!("reading model {}", path.display()))?;
        let text = std::str::from_utf8(&bytes).context("model file is not UTF-8")?;
        let mut model = ClassifierModel::from_json(text)?;
        if let Some(t) = threshold_override {
            model = model.with_threshold(t)?;
        }
        Ok(Self { model, model_hash: hex::encode(Sha256::digest(&bytes)) })
    }
}

pub struct AppState {
    snapshot: ArcSwap<Snapshot>,
    backend: Arc<dyn EmbeddingBackend>,
    model_path: PathBuf,
    threshold_override: Option<f64>,
    workers: Semaphore,
    reload_lock: Mutex<()>,
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub model_path: PathBuf,
    pub max_body_bytes: usize,
    pub threshold_override: Option<f64>,
    pub workers: usize,
}

impl AppState {
    pub fn new(cfg: &ServiceConfig, backend: Arc<dyn EmbeddingBackend>) -> anyhow::Result<Arc<Self>> {
        let snap = Snapshot::load(&cfg.model_path, cfg.threshold_override)?;
        check_dim(&snap.model, backend.as_ref())?;
        Ok(Arc::new(Self {
            snapshot: ArcSwap::from_pointee(snap),
            backend,
            model_path: cfg.model_path.clone(),
            threshold_override: cfg.threshold_override,
            workers: Semaphore::new(cfg.workers.max(1)),
            reload_lock: Mutex::new(()),
        }))
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.snapshot.load_full()
    }
}

fn check_dim(model: &ClassifierModel, backend: &dyn EmbeddingBackend) -> anyhow::Result<()> {
    if model.dim != backend.dim() {
        bail!("model dim {} does not match backend {} dim {}", model.dim, backend.name(), backend.dim());
    }
    Ok(())
}

pub fn router(state: Arc<AppState>, max_body_bytes: usize) -> Router {
    Router::new()
        .route("/v1/classify", post(classify))
        .route("/v1/health", get(health))
        .route("/v1/reload", post(reload))
        .layer(DefaultBodyLimit::max(max_body_bytes))
        .with_state(state)
}

fn json_response<T: Serialize>(status: StatusCode, body: &T) -> Response {
    let bytes = serde_json::to_vec(body).expect("response serialisation cannot fail");
    (status, [(header::CONTENT_TYPE, "application/json")], bytes).into_response()
}

#[derive(Serialize)]
struct ErrorBody {
    error: String,
}

fn error(status: StatusCode, msg: impl Into<String>) -> Response {
    json_response(status, &ErrorBody { error: msg.into() })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassifyRequest {
    text: Option<String>,
    image_b64: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyResponse {
    pub label: u8,
    pub score: f64,
    pub model_kind: ClassifierKind,
    pub dim: usize,
}

enum Input {
    Text(String),
    Image(Vec<u8>),
}

async fn classify(State(state): State<Arc<AppState>>, body: Result<Bytes, BytesRejection>) -> Response {
    let body = match body {
        Ok(b) => b,
        Err(rej) => return error(rej.status(), rej.body_text()),
    };
    let req: ClassifyRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("malformed body: {e}")),
    };
    let input = match (req.text, req.image_b64) {
        (Some(t), None) => Input::Text(t),
        (None, Some(b64)) => match base64::engine::general_purpose::STANDARD.decode(b64.trim()) {
            Ok(bytes) => Input::Image(bytes),
            Err(e) => return error(StatusCode::BAD_REQUEST, format!("image_b64 is not base64: {e}")),
        },
        _ => return error(StatusCode::BAD_REQUEST, "body needs exactly one of `text` or `image_b64`"),
    };

    let Ok(_permit) = state.workers.acquire().await else {
        return error(StatusCode::SERVICE_UNAVAILABLE, "shutting down");
    };
    let snap = state.snapshot();
    let backend = state.backend.clone();
    let job = tokio::task::spawn_blocking(move || -> Result<ClassifyResponse, (StatusCode, String)> {
        let vector = match input {
            Input::Text(t) => embed_texts(backend.as_ref(), &[clean_text(&t)], 1),
            Input::Image(bytes) => {
                let img = decode_image(&bytes)
                    .map_err(|e| (StatusCode::UNPROCESSABLE_ENTITY, format!("undecodable image: {e}")))?;
                embed_images(backend.as_ref(), &[img], 1)
            }
        }
        .map_err(|e| (StatusCode::UNPROCESSABLE_ENTITY, format!("embedding: {e}")))?
        .remove(0);
        let p = predict(&snap.model, vector.as_slice())
            .map_err(|e| (StatusCode::INTERNAL_SERVER_ERROR, format!("classifier: {e}")))?;
        Ok(ClassifyResponse { label: p.label, score: p.score, model_kind: snap.model.kind, dim: snap.model.dim })
    });
    match job.await {
        Ok(Ok(resp)) => json_response(StatusCode::OK, &resp),
        Ok(Err((status, msg))) => error(status, msg),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, format!("worker failed: {e}")),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub model_hash: String,
}

async fn health(State(state): State<Arc<AppState>>) -> Response {
    let snap = state.snapshot();
    json_response(StatusCode::OK, &HealthResponse { status: "ok".into(), model_hash: snap.model_hash.clone() })
}

async fn reload(State(state): State<Arc<AppState>>) -> Response {
    let _guard = state.reload_lock.lock().await;
    let path = state.model_path.clone();
    let over = state.threshold_override;
    let loaded = tokio::task::spawn_blocking(move || Snapshot::load(&path, over)).await;
    let snap = match loaded {
        Ok(Ok(s)) => s,
        Ok(Err(e)) => return error(StatusCode::UNPROCESSABLE_ENTITY, format!("reload failed: {e:#}")),
        Err(e) => return error(StatusCode::INTERNAL_SERVER_ERROR, format!("reload failed: {e}")),
    };
    if let Err(e) = check_dim(&snap.model, state.backend.as_ref()) {
        return error(StatusCode::UNPROCESSABLE_ENTITY, format!("reload failed: {e}"));
    }
    let hash = snap.model_hash.clone();
    state.snapshot.store(Arc::new(snap));
    log::info!("reloaded model {hash}");
    json_response(StatusCode::OK, &HealthResponse { status: "reloaded".into(), model_hash: hash })
}

/// Binds and serves until Ctrl-C.
pub async fn serve(bind: &str, state: Arc<AppState>, max_body_bytes: usize) -> anyhow::Result<()> {
    let listener =
        tokio::net::TcpListener::bind(bind).await.with_context(|| format!("serve: binding {bind}"))?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state, max_body_bytes))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .context("serve")?;
    Ok(())
}
