use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Serialize;
use tower_http::services::ServeDir;

use crate::{Fault, PredictionService};

impl IntoResponse for Fault {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

fn reply<T: Serialize>(r: Result<T, Fault>) -> Response {
    match r {
        Ok(v) => Json(v).into_response(),
        Err(f) => f.into_response(),
    }
}

type Shared = State<Arc<PredictionService>>;

async fn predict(State(s): Shared, body: Bytes) -> Response {
    reply(s.predict_bytes(&body))
}

async fn schema(State(s): Shared) -> Response {
    reply(s.schema())
}

async fn health(State(s): Shared) -> Response {
    Json(s.health()).into_response()
}

async fn model_info(State(s): Shared) -> Response {
    reply(s.model_info())
}

async fn api_not_found(uri: Uri) -> Response {
    Fault::not_found(uri.path()).into_response()
}

/// API routes under `/api`, with optional static files served from `/`.
pub fn router(service: Arc<PredictionService>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/predict", post(predict))
        .route("/schema", get(schema))
        .route("/health", get(health))
        .route("/model-info", get(model_info))
        .fallback(api_not_found)
        .with_state(service);
    let app = Router::new().nest("/api", api);
    match static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app.fallback(api_not_found),
    }
}

/// Binds and serves until the process is interrupted.
pub async fn serve(service: Arc<PredictionService>, bind: SocketAddr, static_dir: Option<PathBuf>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(service, static_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
