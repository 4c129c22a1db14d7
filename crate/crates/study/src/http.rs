//! JSON-over-HTTP front of a [`Study`].
//!
//! | method | path | body / reply |
//! |---|---|---|
//! | POST | `/sessions` | `{"participant_id"}` → the assignment plan |
//! | GET | `/sessions/{id}/trials/{n}` | trial view with image URLs and texts |
//! | POST | `/sessions/{id}/responses` | a study record → `{"duplicate"}` |
//! | GET | `/summary` | summary table |
//! | GET | `/healthz` | `ok` |
//! | GET | `/images/{file}` | battery image |

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

use crate::{Study, StudyError, StudyRecord};

#[derive(Clone)]
struct AppState {
    study: Arc<Study>,
    images: Option<Arc<PathBuf>>,
}

struct ApiError(StudyError);

impl From<StudyError> for ApiError {
    fn from(e: StudyError) -> Self {
        Self(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self.0 {
            StudyError::UnknownSession(_) | StudyError::UnknownTrial { .. } => StatusCode::NOT_FOUND,
            StudyError::DuplicateTrial { .. } => StatusCode::CONFLICT,
            StudyError::InvalidScores(_) | StudyError::InvalidRecord(_) => StatusCode::UNPROCESSABLE_ENTITY,
            StudyError::NoBatteries => StatusCode::SERVICE_UNAVAILABLE,
            StudyError::Corrupt { .. } | StudyError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(json!({ "error": self.0.kind(), "message": self.0.to_string() }))).into_response()
    }
}

#[derive(Deserialize)]
struct NewSession {
    participant_id: String,
}

async fn create_session(State(app): State<AppState>, Json(body): Json<NewSession>) -> Result<Response, ApiError> {
    let study = app.study.clone();
    let plan = tokio::task::spawn_blocking(move || study.create_session(&body.participant_id))
        .await
        .map_err(|e| StudyError::Io(std::io::Error::other(e)))??;
    Ok((StatusCode::CREATED, Json(plan)).into_response())
}

async fn trial(State(app): State<AppState>, Path((id, n)): Path<(String, usize)>) -> Result<Response, ApiError> {
    Ok(Json(app.study.trial(&id, n)?).into_response())
}

async fn respond(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Json(record): Json<StudyRecord>,
) -> Result<Response, ApiError> {
    if record.session_id != id {
        return Err(StudyError::InvalidRecord("session id in path and body differ".into()).into());
    }
    let study = app.study.clone();
    let ack = tokio::task::spawn_blocking(move || study.record_response(record))
        .await
        .map_err(|e| StudyError::Io(std::io::Error::other(e)))??;
    Ok(Json(ack).into_response())
}

async fn summary(State(app): State<AppState>) -> Response {
    Json(app.study.summarize()).into_response()
}

async fn healthz() -> &'static str {
    "ok"
}

fn safe_image_name(name: &str) -> bool {
    !name.starts_with('.')
        && name.ends_with(".png")
        && name.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

async fn image(State(app): State<AppState>, Path(file): Path<String>) -> Response {
    let Some(dir) = app.images.as_ref() else {
        return StatusCode::NOT_FOUND.into_response();
    };
    if !safe_image_name(&file) {
        return StatusCode::NOT_FOUND.into_response();
    }
    match tokio::fs::read(dir.join(&file)).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, "image/png")], bytes).into_response(),
        Err(_) => StatusCode::NOT_FOUND.into_response(),
    }
}

/// Routes for `study`; images are served from `images` when given.
pub fn router(study: Arc<Study>, images: Option<PathBuf>) -> Router {
    let state = AppState { study, images: images.map(Arc::new) };
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/trials/{n}", get(trial))
        .route("/sessions/{id}/responses", post(respond))
        .route("/summary", get(summary))
        .route("/healthz", get(healthz))
        .route("/images/{file}", get(image))
        .with_state(state)
}

/// Serves until ctrl-c.
pub async fn serve(addr: SocketAddr, study: Arc<Study>, images: Option<PathBuf>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(study, images))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
