//! HTTP front end over [`SessionManager`].

use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::Serialize;

use crate::error::ServiceError;
use crate::manager::{CreateRequest, FeedbackRequest, SessionManager, VerdictRequest};

#[derive(Serialize)]
struct ErrorBody {
    error: String,
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        if status.is_server_error() {
            log::error!("{self}");
        }
        (status, Json(ErrorBody { error: self.to_string() })).into_response()
    }
}

type Shared = Arc<SessionManager>;
type ApiResult<T> = Result<Json<T>, ServiceError>;

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ServiceError> {
    payload.map(|Json(v)| v).map_err(|e| ServiceError::BadRequest(e.body_text()))
}

/// Runs manager calls off the async workers; selection solves convex
/// programs.
async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, ServiceError> + Send + 'static,
{
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map(Json),
        Err(e) => Err(ServiceError::Io(std::io::Error::other(e))),
    }
}

async fn create(
    State(mgr): State<Shared>,
    payload: Result<Json<CreateRequest>, JsonRejection>,
) -> Result<(StatusCode, Json<crate::manager::SessionView>), ServiceError> {
    let req = body(payload)?;
    let view = blocking(move || mgr.create(&req)).await?;
    Ok((StatusCode::CREATED, view))
}

async fn view(State(mgr): State<Shared>, Path(id): Path<String>) -> ApiResult<crate::manager::SessionView> {
    mgr.view(&id).map(Json)
}

async fn next(State(mgr): State<Shared>, Path(id): Path<String>) -> ApiResult<crate::manager::NextView> {
    blocking(move || mgr.next(&id)).await
}

async fn feedback(
    State(mgr): State<Shared>,
    Path(id): Path<String>,
    payload: Result<Json<FeedbackRequest>, JsonRejection>,
) -> ApiResult<crate::manager::FeedbackAck> {
    let req = body(payload)?;
    blocking(move || mgr.feedback(&id, &req)).await
}

async fn evaluation(State(mgr): State<Shared>, Path(id): Path<String>) -> ApiResult<crate::manager::EvaluationView> {
    blocking(move || mgr.evaluation(&id)).await
}

async fn verdict(
    State(mgr): State<Shared>,
    Path(id): Path<String>,
    payload: Result<Json<VerdictRequest>, JsonRejection>,
) -> ApiResult<crate::manager::VerdictAck> {
    let req = body(payload)?;
    blocking(move || mgr.verdict(&id, &req)).await
}

async fn health() -> &'static str {
    "ok"
}

pub fn router(mgr: Arc<SessionManager>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/sessions", axum::routing::post(create))
        .route("/sessions/{id}", get(view))
        .route("/sessions/{id}/next", get(next))
        .route("/sessions/{id}/feedback", axum::routing::post(feedback))
        .route("/sessions/{id}/evaluation", get(evaluation).post(verdict))
        .with_state(mgr)
}
