//! HTTP routes over a [`SessionHandle`].

use axum::body::Body;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use std::convert::Infallible;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::Duration;
use tokio::sync::mpsc;
use twin_core::registration::PoseUpdate;
use twin_core::session::{SequenceDocument, SessionError, SessionHandle};

/// How long the stream bridge waits on the bus before checking whether
/// the HTTP side went away.
const BRIDGE_POLL: Duration = Duration::from_millis(200);

/// A full recorded run is several megabytes, past axum's default limit.
const MAX_BODY: usize = 64 << 20;

#[derive(Clone)]
pub struct AppState {
    pub handle: SessionHandle,
    last_saved: Arc<Mutex<Option<SequenceDocument>>>,
    sequence_dir: Option<PathBuf>,
}

impl AppState {
    pub fn new(handle: SessionHandle, sequence_dir: Option<PathBuf>) -> Self {
        AppState {
            handle,
            last_saved: Arc::new(Mutex::new(None)),
            sequence_dir,
        }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/scene", get(scene))
        .route("/detach", post(detach))
        .route("/reset", post(reset))
        .route("/sequence/save", post(save))
        .route("/sequence/replay", post(replay))
        .route("/events", get(events))
        .layer(DefaultBodyLimit::max(MAX_BODY))
        .with_state(state)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub blockers: Vec<String>,
}

pub struct ApiError(SessionError);

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        ApiError(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        use SessionError::*;
        let (status, kind) = match &self.0 {
            Busy => (StatusCode::CONFLICT, "busy"),
            PrecedenceViolation { .. } => (StatusCode::CONFLICT, "precedence_violation"),
            NotAttached(_) => (StatusCode::CONFLICT, "not_attached"),
            EmptySession => (StatusCode::CONFLICT, "empty_session"),
            PlanningTimeout { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "planning_timeout"),
            PlanningFailed { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "planning_failed"),
            SceneMismatch { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "scene_mismatch"),
            ReplayAborted { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "replay_aborted"),
            Registration(_) => (StatusCode::UNPROCESSABLE_ENTITY, "registration"),
            Format(_) => (StatusCode::BAD_REQUEST, "format"),
            Scene(_) => (StatusCode::NOT_FOUND, "scene"),
            LinkFaulted { .. } => (StatusCode::SERVICE_UNAVAILABLE, "link_faulted"),
            ExecutionFailed { .. } => (StatusCode::SERVICE_UNAVAILABLE, "execution_failed"),
            Io(_) => (StatusCode::INTERNAL_SERVER_ERROR, "io"),
        };
        let blockers = match &self.0 {
            PrecedenceViolation { blockers, .. } => blockers.clone(),
            _ => Vec::new(),
        };
        let body = ErrorBody {
            error: kind.into(),
            message: self.0.to_string(),
            blockers,
        };
        (status, Json(body)).into_response()
    }
}

/// Session calls block for the length of a skill, so they run off the
/// async workers.
async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, SessionError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(SessionError::Io(format!("worker panicked: {e}"))))?
        .map_err(ApiError)
}

async fn scene(State(st): State<AppState>) -> impl IntoResponse {
    Json(st.handle.snapshot())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DetachRequest {
    pub component_id: String,
}

async fn detach(State(st): State<AppState>, Json(req): Json<DetachRequest>) -> Result<Response, ApiError> {
    let handle = st.handle.clone();
    let record = blocking(move || handle.detach(&req.component_id)).await?;
    Ok(Json(record).into_response())
}

async fn reset(State(st): State<AppState>) -> Result<StatusCode, ApiError> {
    let handle = st.handle.clone();
    blocking(move || handle.reset()).await?;
    Ok(StatusCode::NO_CONTENT)
}

/// Responds with the canonical document bytes. With a sequence directory
/// configured the file is also written there and its path returned in
/// `x-sequence-path`.
async fn save(State(st): State<AppState>) -> Result<Response, ApiError> {
    let handle = st.handle.clone();
    let dir = st.sequence_dir.clone();
    let (doc, path) = blocking(move || match dir {
        Some(dir) => {
            let doc = handle.sequence_document()?;
            let path = dir.join(format!("{}-{}.json", doc.evb_type_id, doc.created_us));
            handle.save_sequence(&path).map(|d| (d, Some(path)))
        }
        None => handle.sequence_document().map(|d| (d, None)),
    })
    .await?;
    let body = doc.to_canonical_json();
    *st.last_saved.lock().unwrap_or_else(|p| p.into_inner()) = Some(doc);
    let mut resp = ([(header::CONTENT_TYPE, "application/json")], body).into_response();
    if let Some(v) = path.and_then(|p| HeaderValue::from_str(&p.display().to_string()).ok()) {
        resp.headers_mut().insert("x-sequence-path", v);
    }
    Ok(resp)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ReplayRequest {
    pub pose_update: PoseUpdate,
    /// Defaults to the last saved document.
    #[serde(default)]
    pub sequence: Option<SequenceDocument>,
}

async fn replay(State(st): State<AppState>, Json(req): Json<ReplayRequest>) -> Result<Response, ApiError> {
    let doc = match req.sequence {
        Some(d) => d,
        None => st
            .last_saved
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .clone()
            .ok_or_else(|| ApiError(SessionError::Format("no sequence given and none saved".into())))?,
    };
    let handle = st.handle.clone();
    let report = blocking(move || handle.replay_sequence(&doc, &req.pose_update)).await?;
    Ok(Json(report).into_response())
}

/// Newline-delimited envelopes, starting with a snapshot.
async fn events(State(st): State<AppState>) -> Response {
    let sub = st.handle.subscribe();
    let (tx, rx) = mpsc::channel::<String>(256);
    tokio::task::spawn_blocking(move || {
        while !tx.is_closed() {
            let Some(env) = sub.recv_timeout(BRIDGE_POLL) else { continue };
            let line = match serde_json::to_string(&env) {
                Ok(l) => l + "\n",
                Err(e) => {
                    tracing::error!("event not serializable: {e}");
                    continue;
                }
            };
            // A full channel blocks only this thread; the bus keeps
            // dropping the oldest entries meanwhile.
            if tx.blocking_send(line).is_err() {
                break;
            }
        }
        tracing::debug!("event subscriber left");
    });
    let stream = futures::stream::unfold(rx, |mut rx| async move {
        rx.recv().await.map(|line| (Ok::<_, Infallible>(line), rx))
    });
    ([(header::CONTENT_TYPE, "application/x-ndjson")], Body::from_stream(stream)).into_response()
}
