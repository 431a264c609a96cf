//! HTTP front end for [`SessionStore`].

use std::future::Future;
use std::sync::{Arc, Mutex, MutexGuard};

use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::net::TcpListener;

use super::{CalibrationAnswers, SessionError, SessionStore};

/// Environment variable holding the listen address.
pub const LISTEN_ENV: &str = "EDITQA_LISTEN";
pub const DEFAULT_LISTEN: &str = "127.0.0.1:8080";

pub type SharedStore = Arc<Mutex<SessionStore>>;

struct ApiError(SessionError);

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        Self(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        use SessionError::*;
        let (status, kind) = match &self.0 {
            UnknownSession(_) => (StatusCode::NOT_FOUND, "unknown_session"),
            OutOfOrderSlot { .. } => (StatusCode::CONFLICT, "out_of_order_slot"),
            SessionNotActive { .. } => (StatusCode::CONFLICT, "session_not_active"),
            SessionIncomplete => (StatusCode::CONFLICT, "session_incomplete"),
            InsufficientItems { .. } => (StatusCode::CONFLICT, "insufficient_items"),
            OutOfScale { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "out_of_scale"),
            IncompleteAnswers(_) => (StatusCode::UNPROCESSABLE_ENTITY, "incomplete_answers"),
            InvalidSubject(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_subject"),
            UnknownItem(_) | InvalidConfig(_) | LogCorrupt { .. } | LogReplay { .. } | Io(_) => {
                log::error!("{}", self.0);
                (StatusCode::INTERNAL_SERVER_ERROR, "internal")
            }
        };
        let mut body = json!({ "error": kind, "message": self.0.to_string() });
        if let SessionNotActive { state } = &self.0 {
            body["state"] = json!(state);
        }
        if let OutOfOrderSlot { expected, .. } = &self.0 {
            body["expected_slot"] = json!(expected);
        }
        (status, Json(body)).into_response()
    }
}

fn lock(store: &SharedStore) -> MutexGuard<'_, SessionStore> {
    // a panic mid-request cannot leave the store half-updated: every
    // mutation is applied only after its log write succeeds
    store.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

#[derive(Deserialize)]
struct CreateRequest {
    subject_id: String,
}

#[derive(Serialize)]
struct CreateResponse {
    session_id: String,
    state: super::SessionState,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RatingRequest {
    slot_index: usize,
    video_quality: f64,
    editing_alignment: f64,
    structural_consistency: f64,
}

#[derive(Deserialize)]
struct CalibrationRequest {
    answers: CalibrationAnswers,
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

async fn create(State(store): State<SharedStore>, Json(req): Json<CreateRequest>) -> Result<Response, ApiError> {
    let status = lock(&store).create(&req.subject_id)?;
    let body = CreateResponse {
        session_id: status.session_id,
        state: status.state,
    };
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

async fn status(State(store): State<SharedStore>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(lock(&store).status(&id)?).into_response())
}

async fn next(State(store): State<SharedStore>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(lock(&store).next(&id)?).into_response())
}

async fn rate(
    State(store): State<SharedStore>,
    Path(id): Path<String>,
    Json(req): Json<RatingRequest>,
) -> Result<Response, ApiError> {
    let scores = [req.video_quality, req.editing_alignment, req.structural_consistency];
    Ok(Json(lock(&store).submit(&id, req.slot_index, scores)?).into_response())
}

async fn calibration_items(State(store): State<SharedStore>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(lock(&store).calibration_items(&id)?).into_response())
}

async fn calibrate(
    State(store): State<SharedStore>,
    Path(id): Path<String>,
    Json(req): Json<CalibrationRequest>,
) -> Result<Response, ApiError> {
    Ok(Json(lock(&store).submit_calibration(&id, &req.answers)?).into_response())
}

async fn reliability(State(store): State<SharedStore>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(lock(&store).repeat_reliability(&id)?).into_response())
}

async fn export(State(store): State<SharedStore>) -> Response {
    let mut buf = Vec::new();
    if let Err(e) = lock(&store).export(&mut buf) {
        log::error!("export failed: {e}");
        return StatusCode::INTERNAL_SERVER_ERROR.into_response();
    }
    ([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], buf).into_response()
}

pub fn router(store: SharedStore) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/export", get(export))
        .route("/sessions", post(create))
        .route("/sessions/{id}", get(status))
        .route("/sessions/{id}/next", get(next))
        .route("/sessions/{id}/ratings", post(rate))
        .route("/sessions/{id}/calibration", get(calibration_items).post(calibrate))
        .route("/sessions/{id}/reliability", get(reliability))
        .with_state(store)
}

/// Serves until `shutdown` resolves, then syncs the log.
pub async fn serve(
    listener: TcpListener,
    store: SharedStore,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(store.clone()))
        .with_graceful_shutdown(shutdown)
        .await?;
    lock(&store).sync()
}

/// Resolves on Ctrl-C or SIGTERM.
pub async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
    log::info!("shutting down");
}
