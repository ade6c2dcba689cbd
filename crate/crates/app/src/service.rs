//! HTTP front end: `POST /generate`, `GET /palette`, `GET /model-info`, `GET /health`.
//!
//! Generation runs on one dedicated thread fed by a bounded queue. The info endpoints
//! answer from state captured at startup, so they never wait behind generation.

use std::io::Cursor;
use std::net::SocketAddr;
use std::sync::mpsc::{sync_channel, SyncSender, TrySendError};
use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Serialize;
use serde_json::json;
use tokio::sync::oneshot;
use trafficgen::config::ModelConfig;
use trafficgen::scene::{GraphVariant, PaletteColor};
use trafficgen::spade::{generate_image, model_summary, ModelSummary, TrafficModel};

use crate::request::{FieldError, SceneRequest, ValidScene};

pub const SEED_HEADER: &str = "x-seed";
pub const LATENCY_HEADER: &str = "x-generation-ms";
pub const DEFAULT_QUEUE: usize = 16;

/// Encodes an RGB image as PNG bytes.
pub fn encode_png(image: &image::RgbImage) -> anyhow::Result<Vec<u8>> {
    let mut out = Cursor::new(Vec::new());
    image.write_to(&mut out, image::ImageFormat::Png)?;
    Ok(out.into_inner())
}

struct Job {
    scene: ValidScene,
    reply: oneshot::Sender<Result<Vec<u8>, String>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ModelInfo {
    pub variant: GraphVariant,
    pub image_size: usize,
    pub step: u64,
    pub config: ModelConfig,
    pub parameters: Option<ModelSummary>,
    pub queue_capacity: usize,
}

struct Loaded {
    queue: SyncSender<Job>,
    info: ModelInfo,
}

/// Shared handler state. Cloning shares the same worker.
#[derive(Clone)]
pub struct AppState {
    loaded: Option<Arc<Loaded>>,
}

impl AppState {
    /// A service with no model; `/generate` and `/model-info` answer 503.
    pub fn empty() -> Self {
        Self { loaded: None }
    }

    /// Moves `model` onto a worker thread behind a queue of `queue` pending requests.
    pub fn with_model(model: TrafficModel, step: u64, queue: usize) -> anyhow::Result<Self> {
        let queue = queue.max(1);
        let info = ModelInfo {
            variant: model.config.variant,
            image_size: model.config.generator.image_size,
            step,
            config: model.config.clone(),
            parameters: model_summary(&model.config).ok(),
            queue_capacity: queue,
        };
        let (tx, rx) = sync_channel::<Job>(queue);
        std::thread::Builder::new()
            .name("trafficgen-inference".into())
            .spawn(move || {
                for job in rx {
                    let result = generate_image(&model, &job.scene.entities, job.scene.time, job.scene.seed)
                        .map_err(|e| e.to_string())
                        .and_then(|img| encode_png(&img).map_err(|e| e.to_string()));
                    let _ = job.reply.send(result);
                }
            })?;
        Ok(Self {
            loaded: Some(Arc::new(Loaded { queue: tx, info })),
        })
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/generate", post(generate))
        .route("/palette", get(palette))
        .route("/model-info", get(model_info))
        .route("/health", get(health))
        .with_state(state)
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

fn field_errors(errors: Vec<FieldError>) -> Response {
    (
        StatusCode::UNPROCESSABLE_ENTITY,
        Json(json!({ "error": "invalid scene request", "fields": errors })),
    )
        .into_response()
}

async fn generate(State(state): State<AppState>, body: Bytes) -> Response {
    let Some(loaded) = state.loaded.as_ref() else {
        return error(StatusCode::SERVICE_UNAVAILABLE, "no model is loaded");
    };
    let request: SceneRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) if e.is_data() => {
            return field_errors(vec![FieldError {
                field: "body".into(),
                message: e.to_string(),
            }])
        }
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("malformed JSON: {e}")),
    };
    let scene = match request.validate(loaded.info.variant) {
        Ok(s) => s,
        Err(errors) => return field_errors(errors),
    };
    let seed = scene.seed;
    let (reply, wait) = oneshot::channel();
    let start = Instant::now();
    match loaded.queue.try_send(Job { scene, reply }) {
        Ok(()) => {}
        Err(TrySendError::Full(_)) => {
            return error(StatusCode::SERVICE_UNAVAILABLE, "generation queue is full; retry later")
        }
        Err(TrySendError::Disconnected(_)) => {
            return error(StatusCode::SERVICE_UNAVAILABLE, "inference worker has stopped")
        }
    }
    match wait.await {
        Ok(Ok(png)) => {
            let ms = start.elapsed().as_secs_f64() * 1000.0;
            let mut response = ([(header::CONTENT_TYPE, "image/png")], png).into_response();
            let headers = response.headers_mut();
            headers.insert(SEED_HEADER, HeaderValue::from(seed));
            headers.insert(
                LATENCY_HEADER,
                HeaderValue::from_str(&format!("{ms:.1}")).expect("numeric header"),
            );
            response
        }
        Ok(Err(message)) => error(StatusCode::INTERNAL_SERVER_ERROR, message),
        Err(_) => error(StatusCode::SERVICE_UNAVAILABLE, "inference worker has stopped"),
    }
}

async fn palette() -> Json<serde_json::Value> {
    let colors: Vec<_> = PaletteColor::ALL
        .iter()
        .map(|c| json!({ "name": c.name(), "rgb": c.rgb() }))
        .collect();
    Json(json!(colors))
}

async fn model_info(State(state): State<AppState>) -> Response {
    match &state.loaded {
        Some(l) => Json(&l.info).into_response(),
        None => error(StatusCode::SERVICE_UNAVAILABLE, "no model is loaded"),
    }
}

async fn health(State(state): State<AppState>) -> Json<serde_json::Value> {
    Json(json!({ "status": "ok", "model_loaded": state.loaded.is_some() }))
}

/// Serves until ctrl-c.
pub async fn serve(state: AppState, addr: SocketAddr) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
