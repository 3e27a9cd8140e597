//! HTTP/JSON API over a [`SessionManager`].

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use recallfeed::service::{CreateRequest, FeedbackRequest, SessionManager};
use recallfeed::Error;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;

use crate::Failure;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError { status, code, message: message.into() }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let (status, code) = match &e {
            Error::UnknownSession(_) => (StatusCode::NOT_FOUND, "unknown_session"),
            Error::UnknownId(_) => (StatusCode::NOT_FOUND, "unknown_document"),
            Error::Conflict(_) | Error::AlreadyReviewed(_) => (StatusCode::CONFLICT, "stale_batch"),
            Error::InvalidFeedback(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_feedback"),
            Error::InvalidParameter(_) | Error::DimensionMismatch { .. } | Error::ZeroNorm => {
                (StatusCode::UNPROCESSABLE_ENTITY, "invalid_request")
            }
            Error::Insufficient(_) => (StatusCode::UNPROCESSABLE_ENTITY, "no_candidates"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        if status.is_server_error() {
            log::error!("{e}");
        }
        ApiError::new(status, code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "code": self.code, "message": self.message }))).into_response()
    }
}

/// Parses a JSON body: syntax errors are 400, well-formed but invalid bodies 422.
fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| match e.classify() {
        serde_json::error::Category::Data => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_request", e.to_string()),
        _ => ApiError::new(StatusCode::BAD_REQUEST, "malformed_json", e.to_string()),
    })
}

/// Runs a manager call off the async workers; feedback and log syncs block.
async fn call<T, F>(manager: Arc<SessionManager>, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&SessionManager) -> recallfeed::Result<T> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&manager))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
        .map_err(ApiError::from)
}

fn ok<T: Serialize>(status: StatusCode, body: T) -> Response {
    (status, Json(body)).into_response()
}

async fn create(State(m): State<Arc<SessionManager>>, body: Bytes) -> Result<Response, ApiError> {
    let request: CreateRequest = parse(&body)?;
    let view = call(m, move |m| m.create_session(request)).await?;
    Ok(ok(StatusCode::CREATED, view))
}

async fn fetch(State(m): State<Arc<SessionManager>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let view = call(m, move |m| m.get_session(&id)).await?;
    Ok(ok(StatusCode::OK, view))
}

async fn feedback(State(m): State<Arc<SessionManager>>, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let request: FeedbackRequest = parse(&body)?;
    let view = call(m, move |m| m.submit_feedback(&id, &request)).await?;
    Ok(ok(StatusCode::OK, view))
}

async fn trace(State(m): State<Arc<SessionManager>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let trace = call(m, move |m| m.trace(&id)).await?;
    Ok(ok(StatusCode::OK, trace))
}

async fn delete(State(m): State<Arc<SessionManager>>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    call(m, move |m| m.delete_session(&id)).await?;
    Ok(StatusCode::NO_CONTENT)
}

pub fn router(manager: Arc<SessionManager>) -> Router {
    Router::new()
        .route("/api/sessions", post(create))
        .route("/api/sessions/{id}", get(fetch).delete(delete))
        .route("/api/sessions/{id}/feedback", post(feedback))
        .route("/api/sessions/{id}/trace", get(trace))
        .with_state(manager)
}

pub fn serve_blocking(manager: Arc<SessionManager>, addr: SocketAddr) -> Result<(), Failure> {
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        log::info!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, router(manager))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}
