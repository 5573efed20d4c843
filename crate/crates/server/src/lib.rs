//! REST service over the nutrilog pipeline, plus the command-line tools.
//!
//! Every route except `POST /users`, `GET /healthz` and `GET /openapi.json`
//! needs `Authorization: Bearer <token>`, with the token issued when the
//! user was created. Errors are `{"error": {"code", "message"}}`.

pub mod auth;
pub mod commands;
pub mod config;
pub mod error;
pub mod routes;
pub mod views;

use std::sync::Arc;

use axum::extract::DefaultBodyLimit;
use axum::routing::{get, post};
use axum::Router;
use nutrilog_core::pipeline::Pipeline;

pub use config::{ApiConfig, ConfigError};
pub use error::{ApiError, ApiResult};

/// The contract document served at `/openapi.json`.
pub const OPENAPI: &str = include_str!("../openapi.json");

/// Headroom over the media cap for multipart framing.
const BODY_SLACK_BYTES: usize = 64 * 1024;

#[derive(Clone)]
pub struct AppState {
    pub pipeline: Arc<Pipeline>,
    pub media_cap_bytes: usize,
}

impl AppState {
    pub fn new(pipeline: Pipeline, media_cap_bytes: usize) -> Self {
        AppState {
            pipeline: Arc::new(pipeline),
            media_cap_bytes,
        }
    }
}

pub fn router(state: AppState) -> Router {
    let limit = state.media_cap_bytes.saturating_add(BODY_SLACK_BYTES);
    Router::new()
        .route("/healthz", get(routes::health::healthz))
        .route("/openapi.json", get(routes::health::openapi))
        .route("/users", post(routes::users::create))
        .route("/users/{id}", get(routes::users::read).patch(routes::users::update))
        .route("/logs", post(routes::logs::start).get(routes::logs::list))
        .route(
            "/logs/{id}",
            get(routes::logs::read).patch(routes::logs::edit).delete(routes::logs::delete),
        )
        .route("/logs/{id}/answer", post(routes::logs::answer))
        .route("/logs/{id}/finalize", post(routes::logs::finalize))
        .route("/logs/{id}/abandon", post(routes::logs::abandon))
        .route("/drafts/{id}", get(routes::logs::draft))
        .route("/receipts", post(routes::receipts::upload))
        .route("/pantry", get(routes::receipts::pantry))
        .route("/dashboard", get(routes::reports::dashboard))
        .route("/trends", get(routes::reports::trends))
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state)
}

/// Binds and serves until ctrl-c.
pub async fn serve(config: &ApiConfig) -> Result<(), Box<dyn std::error::Error>> {
    let state = config.build_state()?;
    let listener = tokio::net::TcpListener::bind(config.bind).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
