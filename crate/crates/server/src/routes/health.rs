//! Liveness and the contract document.

use axum::extract::State;
use axum::http::header::CONTENT_TYPE;
use axum::http::StatusCode;
use axum::response::IntoResponse;
use axum::Json;

use crate::views::{ComponentHealth, Health};
use crate::{AppState, OPENAPI};

pub const PROBE_TIMEOUT: std::time::Duration = std::time::Duration::from_secs(3);

fn component(result: Result<(), String>) -> ComponentHealth {
    match result {
        Ok(()) => ComponentHealth {
            reachable: true,
            error: None,
        },
        Err(e) => ComponentHealth {
            reachable: false,
            error: Some(e),
        },
    }
}

/// 200 when the store and provider both answer, 503 otherwise.
pub async fn healthz(State(state): State<AppState>) -> (StatusCode, Json<Health>) {
    let store = component(state.pipeline.store().ping().map_err(|e| e.to_string()));
    let probe = state.pipeline.gateway().provider().health();
    let provider = component(match tokio::time::timeout(PROBE_TIMEOUT, probe).await {
        Ok(r) => r.map_err(|e| e.to_string()),
        Err(_) => Err("health probe timed out".into()),
    });
    let ok = store.reachable && provider.reachable;
    let status = if ok { StatusCode::OK } else { StatusCode::SERVICE_UNAVAILABLE };
    (
        status,
        Json(Health {
            status: if ok { "ok" } else { "degraded" },
            store,
            provider,
            embedding_rows: state.pipeline.vectors().len(),
        }),
    )
}

pub async fn openapi() -> impl IntoResponse {
    ([(CONTENT_TYPE, "application/json")], OPENAPI)
}
