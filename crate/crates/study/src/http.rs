use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

use crate::{Study, StudyError};

impl IntoResponse for StudyError {
    fn into_response(self) -> Response {
        let status = match &self {
            StudyError::Invalid(_) => StatusCode::BAD_REQUEST,
            StudyError::NotFound(_) => StatusCode::NOT_FOUND,
            StudyError::Conflict(_) => StatusCode::CONFLICT,
            StudyError::Io(..) | StudyError::Corrupt(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(json!({ "error": self.to_string() }))).into_response()
    }
}

type Shared = Arc<Study>;

#[derive(Deserialize)]
pub struct RatingRequest {
    pub session: String,
    pub trial_token: String,
    pub score: f64,
}

async fn create_session(State(study): State<Shared>) -> Response {
    match study.create_session() {
        Ok(info) => (StatusCode::CREATED, Json(info)).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn get_trial(State(study): State<Shared>, Path((id, k)): Path<(String, usize)>) -> Response {
    match study.get_trial(&id, k) {
        Ok(view) => Json(view).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn submit_rating(State(study): State<Shared>, body: Result<Json<RatingRequest>, JsonRejection>) -> Response {
    let Json(req) = match body {
        Ok(b) => b,
        Err(e) => return StudyError::Invalid(e.body_text()).into_response(),
    };
    match study.submit_rating(&req.session, &req.trial_token, req.score) {
        Ok(ack) => Json(ack).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn results(State(study): State<Shared>) -> Response {
    Json(study.results()).into_response()
}

fn content_type(name: &str) -> &'static str {
    match name.rsplit('.').next().map(str::to_ascii_lowercase).as_deref() {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("ppm" | "pgm" | "pnm") => "image/x-portable-anymap",
        _ => "application/octet-stream",
    }
}

async fn image(State(study): State<Shared>, Path(name): Path<String>) -> Response {
    let Some(path) = study.image_path(&name) else {
        return StudyError::NotFound(format!("image {name}")).into_response();
    };
    match tokio::fs::read(path).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, content_type(&name))], bytes).into_response(),
        Err(e) => {
            log::error!("{}: {e}", path.display());
            StudyError::NotFound(format!("image {name}")).into_response()
        }
    }
}

pub fn router(study: Arc<Study>) -> Router {
    Router::new()
        .route("/api/session", post(create_session))
        .route("/api/session/{id}/trial/{k}", get(get_trial))
        .route("/api/rating", post(submit_rating))
        .route("/api/results", get(results))
        .route("/images/{name}", get(image))
        .with_state(study)
}

/// Serves until the process is stopped.
pub async fn serve(study: Arc<Study>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("study service listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(study)).await
}
