//! HTTP front end for the fall detector.
//!
//! Sessions hold one streaming detector each. Batch evaluation and sweeps run
//! on the blocking pool since they read clip files and use rayon.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, PoisonError, RwLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use falldet::detector::{DetectorError, EventRecord, RunError};
use falldet::evaluation::{EvalError, MetricsJson};
use falldet::pose::StreamError;
use falldet::sweep::{Grid, SweepError};
use falldet::wire::{
    CreateSession, ErrorBody, ErrorCode, EvaluateRequest, EvaluateResponse, FramesAccepted, SessionInfo,
    SweepRequest, SweepResponse,
};
use falldet::{
    compute_metrics, evaluate, evaluate_replay, read_stream, run_sweep, ConfigError, ConfusionMatrix, Detector,
    Evaluation,
};
use uuid::Uuid;

/// Frame batches can be large; one frame is roughly 1.5 KB of JSON.
pub const MAX_BODY_BYTES: usize = 256 * 1024 * 1024;

#[derive(Debug)]
struct Session {
    detector: Detector,
    events_emitted: u64,
}

#[derive(Debug, Clone, Default)]
pub struct AppState {
    sessions: Arc<RwLock<HashMap<Uuid, Arc<Mutex<Session>>>>>,
}

impl AppState {
    pub fn session_count(&self) -> usize {
        self.sessions.read().unwrap_or_else(PoisonError::into_inner).len()
    }

    fn get(&self, id: &str) -> Result<(Uuid, Arc<Mutex<Session>>), ApiError> {
        let uuid = Uuid::parse_str(id).map_err(|_| ApiError::not_found(id))?;
        let sessions = self.sessions.read().unwrap_or_else(PoisonError::into_inner);
        sessions.get(&uuid).cloned().map(|s| (uuid, s)).ok_or_else(|| ApiError::not_found(id))
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: ErrorCode, error: impl ToString) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                code,
                error: error.to_string(),
            },
        }
    }

    fn not_found(id: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, ErrorCode::NotFound, format!("no session `{id}`"))
    }

    fn internal(e: impl ToString) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, ErrorCode::Io, e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        let text = r.body_text();
        // Config bodies are strict about keys; surface those as config errors.
        let code = if text.contains("unknown field") || text.contains("config") {
            ErrorCode::InvalidConfig
        } else {
            ErrorCode::BadRequest
        };
        ApiError::new(StatusCode::BAD_REQUEST, code, text)
    }
}

impl From<ConfigError> for ApiError {
    fn from(e: ConfigError) -> Self {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, ErrorCode::InvalidConfig, e)
    }
}

impl From<StreamError> for ApiError {
    fn from(e: StreamError) -> Self {
        match e {
            StreamError::OrderViolation { .. } => ApiError::new(StatusCode::CONFLICT, ErrorCode::OrderViolation, e),
            StreamError::Malformed { .. } => ApiError::new(StatusCode::BAD_REQUEST, ErrorCode::MalformedRecord, e),
            StreamError::Io(_) => ApiError::new(StatusCode::BAD_REQUEST, ErrorCode::Io, e),
        }
    }
}

impl From<DetectorError> for ApiError {
    fn from(e: DetectorError) -> Self {
        match e {
            DetectorError::OrderViolation(_) => ApiError::new(StatusCode::CONFLICT, ErrorCode::OrderViolation, e),
            DetectorError::Config(c) => c.into(),
        }
    }
}

impl From<EvalError> for ApiError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Stream {
                source: RunError::Stream(StreamError::Malformed { .. }),
                ..
            } => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, ErrorCode::MalformedRecord, e),
            EvalError::Stream { .. } | EvalError::StreamUnreadable { .. } => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, ErrorCode::Io, e)
            }
            _ => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, ErrorCode::Manifest, e),
        }
    }
}

impl From<SweepError> for ApiError {
    fn from(e: SweepError) -> Self {
        match e {
            SweepError::Eval(inner) => inner.into(),
            other => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, ErrorCode::InvalidConfig, other),
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", get(session_info).delete(delete_session))
        .route("/v1/sessions/{id}/frames", post(push_frames))
        .route("/v1/sessions/{id}/reset", post(reset_session))
        .route("/v1/evaluate", post(evaluate_handler))
        .route("/v1/sweep", post(sweep_handler))
        .route("/v1/metrics", post(metrics_handler))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(state)
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok", "version": env!("CARGO_PKG_VERSION") }))
}

fn info(id: Uuid, s: &Session) -> SessionInfo {
    let d = &s.detector;
    SessionInfo {
        session_id: id.to_string(),
        frames_processed: d.frames_processed(),
        calibrated: d.calibration().is_calibrated(),
        cooldown_remaining: d.cooldown_remaining(),
        events_emitted: s.events_emitted,
        config: d.config().clone(),
    }
}

fn lock(s: &Mutex<Session>) -> std::sync::MutexGuard<'_, Session> {
    s.lock().unwrap_or_else(PoisonError::into_inner)
}

/// An empty body creates a session with the default configuration.
async fn create_session(
    State(state): State<AppState>,
    body: axum::body::Bytes,
) -> ApiResult<(StatusCode, Json<SessionInfo>)> {
    let req: CreateSession = if body.iter().all(u8::is_ascii_whitespace) {
        CreateSession::default()
    } else {
        serde_json::from_slice(&body)
            .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, ErrorCode::InvalidConfig, e))?
    };
    let detector = Detector::new(req.config.unwrap_or_default())?;
    let id = Uuid::new_v4();
    let session = Session {
        detector,
        events_emitted: 0,
    };
    let reply = info(id, &session);
    state
        .sessions
        .write()
        .unwrap_or_else(PoisonError::into_inner)
        .insert(id, Arc::new(Mutex::new(session)));
    tracing::debug!(%id, "session created");
    Ok((StatusCode::CREATED, Json(reply)))
}

async fn session_info(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<SessionInfo>> {
    let (uuid, s) = state.get(&id)?;
    let guard = lock(&s);
    Ok(Json(info(uuid, &guard)))
}

async fn delete_session(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<StatusCode> {
    let uuid = Uuid::parse_str(&id).map_err(|_| ApiError::not_found(&id))?;
    let removed = state.sessions.write().unwrap_or_else(PoisonError::into_inner).remove(&uuid);
    match removed {
        Some(_) => Ok(StatusCode::NO_CONTENT),
        None => Err(ApiError::not_found(&id)),
    }
}

async fn reset_session(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<SessionInfo>> {
    let (uuid, s) = state.get(&id)?;
    let mut guard = lock(&s);
    guard.detector.reset();
    guard.events_emitted = 0;
    Ok(Json(info(uuid, &guard)))
}

/// Feeds a JSONL batch to the session. A batch is applied all-or-nothing: on
/// any bad record the session is left as it was before the request.
async fn push_frames(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: String,
) -> ApiResult<Json<FramesAccepted>> {
    let (_, s) = state.get(&id)?;
    let frames = read_stream(body.as_bytes()).collect::<Result<Vec<_>, _>>()?;
    let mut guard = lock(&s);
    let mut detector = guard.detector.clone();
    let mut events = Vec::new();
    for frame in frames.iter().cloned() {
        if let Some(e) = detector.update(frame)?.event {
            events.push(EventRecord::from(&e));
        }
    }
    guard.detector = detector;
    guard.events_emitted += events.len() as u64;
    Ok(Json(FramesAccepted {
        frames_accepted: frames.len() as u64,
        frames_processed: guard.detector.frames_processed(),
        events,
    }))
}

fn evaluation_response(ev: Evaluation) -> EvaluateResponse {
    EvaluateResponse {
        metrics: MetricsJson::new(&ev.metrics, &ev.matrix),
        clips: ev.outcomes,
    }
}

async fn evaluate_handler(
    payload: Result<Json<EvaluateRequest>, JsonRejection>,
) -> ApiResult<Json<EvaluateResponse>> {
    let Json(req) = payload?;
    let cfg = req.config.unwrap_or_default();
    cfg.validate()?;
    let ev = tokio::task::spawn_blocking(move || match &req.replay {
        Some(replay) => evaluate_replay(&req.manifest, replay),
        None => evaluate(&req.manifest, &cfg),
    })
    .await
    .map_err(ApiError::internal)??;
    Ok(Json(evaluation_response(ev)))
}

async fn sweep_handler(payload: Result<Json<SweepRequest>, JsonRejection>) -> ApiResult<Json<SweepResponse>> {
    let Json(req) = payload?;
    let base = req.config.unwrap_or_default();
    let grid = Grid::parse(&req.grid)?;
    let rows = tokio::task::spawn_blocking(move || run_sweep(&req.manifest, &base, &grid))
        .await
        .map_err(ApiError::internal)??;
    Ok(Json(SweepResponse { rows }))
}

async fn metrics_handler(payload: Result<Json<ConfusionMatrix>, JsonRejection>) -> ApiResult<Json<MetricsJson>> {
    let Json(m) = payload?;
    Ok(Json(MetricsJson::new(&compute_metrics(&m), &m)))
}

/// Serves until the future `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: AppState,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}

/// Binds an ephemeral local port and serves in the background. Returns the base URL.
pub async fn spawn_local() -> std::io::Result<String> {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
    let addr = listener.local_addr()?;
    tokio::spawn(async move {
        let _ = serve(listener, AppState::default(), std::future::pending()).await;
    });
    Ok(format!("http://{addr}"))
}
