//! Receipt upload and the pantry listing.

use axum::extract::rejection::QueryRejection;
use axum::extract::{Query, Request, State};
use axum::http::header::CONTENT_TYPE;
use axum::http::StatusCode;
use axum::Json;
use chrono::Duration;
use nutrilog_core::domain::{TimeWindow, UserId};
use nutrilog_core::gateway::Media;
use serde::Deserialize;

use super::logs::{raw_body, read_form};
use super::{json_body, same_user};
use crate::auth::AuthUser;
use crate::error::{ApiError, ApiResult};
use crate::views::{PantryView, ReceiptView, TextReceiptBody};
use crate::AppState;

async fn receipt_payload(req: Request, state: &AppState) -> ApiResult<Media> {
    let ct = req
        .headers()
        .get(CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .unwrap_or("")
        .to_ascii_lowercase();
    if ct.starts_with("multipart/form-data") {
        let form = read_form(req, state).await?;
        return match (form.file, form.text) {
            (Some(m), _) => Ok(m),
            (None, Some(t)) => Ok(Media::text(t)),
            (None, None) => Err(ApiError::validation("form needs a `file` or `text` field")),
        };
    }
    let body = raw_body(req, state).await?;
    if ct.starts_with("application/json") {
        let b: TextReceiptBody = json_body(&body)?;
        return Ok(Media::text(b.text));
    }
    if ct.is_empty() || ct.starts_with("text/plain") {
        let text = String::from_utf8(body.to_vec()).map_err(|_| ApiError::validation("text body must be UTF-8"))?;
        return Ok(Media::text(text));
    }
    let mime = ct.split(';').next().unwrap_or("").trim().to_string();
    Ok(Media::new(mime, body.to_vec()))
}

/// 201 for a new receipt; 200 with a warning when the same bytes were
/// uploaded before (the items are stored again).
pub async fn upload(
    State(state): State<AppState>,
    AuthUser(user): AuthUser,
    req: Request,
) -> ApiResult<(StatusCode, Json<ReceiptView>)> {
    let media = receipt_payload(req, &state).await?;
    if media.bytes.len() > state.media_cap_bytes {
        return Err(ApiError::new(
            StatusCode::PAYLOAD_TOO_LARGE,
            "payload_too_large",
            format!("payload of {} bytes exceeds the {}-byte cap", media.bytes.len(), state.media_cap_bytes),
        ));
    }
    if media.bytes.iter().all(u8::is_ascii_whitespace) {
        return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "empty_payload", "receipt is empty"));
    }
    let ingest = state.pipeline.ingest_receipt(user, &media).await?;
    let status = if ingest.duplicate { StatusCode::OK } else { StatusCode::CREATED };
    Ok((status, Json(ReceiptView::from(ingest))))
}

#[derive(Debug, Deserialize)]
pub struct PantryParams {
    pub user: Option<UserId>,
    /// Only items bought in the last `days` days.
    pub days: Option<i64>,
}

pub async fn pantry(
    State(state): State<AppState>,
    AuthUser(user): AuthUser,
    params: Result<Query<PantryParams>, QueryRejection>,
) -> ApiResult<Json<PantryView>> {
    let Query(p) = params?;
    same_user(user, p.user)?;
    let window = match p.days {
        None => TimeWindow::all(),
        Some(d) if d > 0 => {
            let now = state.pipeline.now();
            TimeWindow::new(now - Duration::days(d), now + Duration::seconds(1))
        }
        Some(_) => return Err(ApiError::bad_request("`days` must be positive")),
    };
    let items = state.pipeline.store().list_receipt_items(user, window)?;
    Ok(Json(PantryView { items }))
}
