//! HTTP front for the preference study.
//!
//! - `GET /study/group/{pairing}/{group}[?participant=ID]`: the group's
//!   questions; with a participant id each question carries `answered`.
//! - `GET /images/{ref}`: image bytes for an opaque reference.
//! - `POST /study/answer`: `{question_id, participant_id, choice}` returns
//!   `{accepted, reason?}`.

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use regforge::study::{group_view, Answer, AnswerLog, Side, StudyPlan};
use regforge::Error;
use serde::{Deserialize, Serialize};

pub struct StudyState {
    pub plan: StudyPlan,
    pub log: Mutex<AnswerLog>,
}

impl StudyState {
    pub fn open(plan: StudyPlan, answers: &Path) -> anyhow::Result<Arc<Self>> {
        let log = AnswerLog::open(answers)?;
        Ok(Arc::new(StudyState {
            plan,
            log: Mutex::new(log),
        }))
    }
}

#[derive(Debug, Deserialize)]
pub struct AnswerRequest {
    pub question_id: String,
    pub participant_id: String,
    pub choice: Side,
}

#[derive(Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerResponse {
    pub accepted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

pub fn router(state: Arc<StudyState>) -> Router {
    Router::new()
        .route("/study/group/{pairing}/{group}", get(get_group))
        .route("/images/{image_ref}", get(get_image))
        .route("/study/answer", post(post_answer))
        .with_state(state)
}

fn error(status: StatusCode, message: String) -> Response {
    (status, Json(serde_json::json!({ "error": message }))).into_response()
}

async fn get_group(
    State(state): State<Arc<StudyState>>,
    UrlPath((pairing, group)): UrlPath<(String, usize)>,
    Query(query): Query<HashMap<String, String>>,
) -> Response {
    let answered = query
        .get("participant")
        .map(|p| state.log.lock().expect("answer log lock").answered_by(p));
    match group_view(&state.plan, &pairing, group, "/images", answered.as_ref()) {
        Ok(view) => Json(view).into_response(),
        Err(e) => error(StatusCode::NOT_FOUND, e.to_string()),
    }
}

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("webp") => "image/webp",
        _ => "application/octet-stream",
    }
}

async fn get_image(State(state): State<Arc<StudyState>>, UrlPath(image_ref): UrlPath<String>) -> Response {
    let Some(path) = state.plan.images.get(&image_ref) else {
        return error(StatusCode::NOT_FOUND, format!("unknown image {image_ref}"));
    };
    match tokio::fs::read(path).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, content_type(path))], bytes).into_response(),
        Err(e) => {
            log::error!("{}: {e}", path.display());
            error(StatusCode::NOT_FOUND, format!("image {image_ref} unavailable"))
        }
    }
}

async fn post_answer(State(state): State<Arc<StudyState>>, Json(req): Json<AnswerRequest>) -> Response {
    let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let answer = Answer {
        question_id: req.question_id,
        participant_id: req.participant_id,
        choice: req.choice,
        timestamp,
    };
    let outcome = state.log.lock().expect("answer log lock").record(&state.plan, answer);
    let (status, reason) = match outcome {
        Ok(()) => (StatusCode::OK, None),
        Err(e @ Error::DuplicateAnswer { .. }) => (StatusCode::CONFLICT, Some(e.to_string())),
        Err(e @ Error::InvalidArgument(_)) => (StatusCode::BAD_REQUEST, Some(e.to_string())),
        Err(e) => {
            log::error!("recording answer: {e}");
            (StatusCode::INTERNAL_SERVER_ERROR, Some(e.to_string()))
        }
    };
    let body = AnswerResponse {
        accepted: reason.is_none(),
        reason,
    };
    (status, Json(body)).into_response()
}

/// Serves until the process is interrupted.
pub async fn serve(state: Arc<StudyState>, bind: &str) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    log::info!("study server listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await?;
    Ok(())
}
