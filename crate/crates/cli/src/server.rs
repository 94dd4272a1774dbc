//! HTTP service. Handlers are thin wrappers over [`crate::api`]; every
//! request runs on its own blocking task with no shared mutable state.

use std::net::SocketAddr;
use std::path::PathBuf;

use axum::body::Bytes;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;
use tower_http::services::ServeDir;

use crate::api::{self, ApiError, RunRequest, MAX_REQUEST_RECORDS};

pub fn router(static_dir: Option<PathBuf>) -> Router {
    let app = Router::new()
        .route("/healthz", get(|| async { "ok" }))
        .route("/api/v1/meta", get(|| async { Json(api::meta()) }))
        .route("/api/v1/simulate", post(simulate))
        .route("/api/v1/sweep", post(sweep));
    match static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app,
    }
}

async fn simulate(body: Bytes) -> Response {
    blocking(move || {
        let req = RunRequest::from_json(&body)?;
        Ok(api::response_bytes(&api::execute(&req, Some(MAX_REQUEST_RECORDS))?))
    })
    .await
}

async fn sweep(body: Bytes) -> Response {
    blocking(move || {
        let cfg = api::sweep_config_from_json(&body)?;
        api::sweep_bytes(&api::execute_sweep(&cfg, Some(MAX_REQUEST_RECORDS))?)
    })
    .await
}

async fn blocking<F>(f: F) -> Response
where
    F: FnOnce() -> Result<Vec<u8>, ApiError> + Send + 'static,
{
    match tokio::task::spawn_blocking(f).await {
        Ok(Ok(bytes)) => ([(header::CONTENT_TYPE, "application/json")], bytes).into_response(),
        Ok(Err(e)) => error_response(e),
        Err(e) => error_response(ApiError::Internal(e.to_string())),
    }
}

pub fn error_response(e: ApiError) -> Response {
    let (status, body) = match &e {
        ApiError::Invalid(fields) => (
            StatusCode::BAD_REQUEST,
            json!({"error": "invalid_request", "message": e.to_string(), "fields": fields}),
        ),
        ApiError::Inadmissible { .. } => (
            StatusCode::UNPROCESSABLE_ENTITY,
            json!({"error": "inadmissible", "message": e.to_string()}),
        ),
        ApiError::BudgetExceeded { .. } => (
            StatusCode::UNPROCESSABLE_ENTITY,
            json!({"error": "budget_exceeded", "message": e.to_string()}),
        ),
        ApiError::TooLarge { .. } => (
            StatusCode::PAYLOAD_TOO_LARGE,
            json!({"error": "too_large", "message": e.to_string()}),
        ),
        ApiError::Internal(detail) => {
            eprintln!("geodp: {detail}");
            (
                StatusCode::INTERNAL_SERVER_ERROR,
                json!({"error": "internal", "message": "internal error"}),
            )
        }
    };
    (status, Json(body)).into_response()
}

/// Serves until ctrl-c.
pub async fn serve(addr: SocketAddr, static_dir: Option<PathBuf>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("geodp: listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(static_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
