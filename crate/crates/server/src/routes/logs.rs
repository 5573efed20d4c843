//! The logging flow: drafts, follow-up answers, finalized logs.

use axum::body::Bytes;
use axum::extract::rejection::{PathRejection, QueryRejection};
use axum::extract::{FromRequest, Multipart, Path, Query, Request, State};
use axum::http::header::CONTENT_TYPE;
use axum::http::StatusCode;
use axum::Json;
use chrono::{DateTime, NaiveDate, Utc};
use nutrilog_core::analytics::day_window;
use nutrilog_core::domain::{DraftId, FoodLog, LogId, Modality, TimeWindow, UserId};
use nutrilog_core::gateway::Media;
use nutrilog_core::persistence::{LogCursor, LogQuery};
use nutrilog_core::pipeline::PipelineError;
use serde::Deserialize;
use serde_json::{Map, Value};

use super::{json_body, same_user};
use crate::auth::AuthUser;
use crate::error::{ApiError, ApiResult};
use crate::views::{AnswerBody, DraftView, LogDetail, LogPageView, TextLogBody};
use crate::AppState;

pub const DEFAULT_PAGE_SIZE: usize = 50;
pub const MAX_PAGE_SIZE: usize = 500;

fn modality_for_mime(mime: &str) -> Option<Modality> {
    let top = mime.split('/').next().unwrap_or_default();
    match top {
        "image" => Some(Modality::Image),
        "audio" => Some(Modality::Audio),
        "text" => Some(Modality::Text),
        _ => None,
    }
}

fn parse_modality(s: &str) -> ApiResult<Modality> {
    serde_json::from_value(Value::String(s.trim().to_ascii_lowercase()))
        .map_err(|_| ApiError::validation(format!("unknown modality `{s}` (expected image, text or audio)")))
}

fn content_type(req: &Request) -> String {
    req.headers()
        .get(CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .unwrap_or("")
        .split(';')
        .next()
        .unwrap_or("")
        .trim()
        .to_ascii_lowercase()
}

pub(crate) async fn raw_body(req: Request, state: &AppState) -> ApiResult<Bytes> {
    Bytes::from_request(req, state).await.map_err(|e| {
        if e.status() == StatusCode::PAYLOAD_TOO_LARGE {
            ApiError::new(StatusCode::PAYLOAD_TOO_LARGE, "payload_too_large", e.body_text())
        } else {
            ApiError::bad_request(e.body_text())
        }
    })
}

/// Parts of a multipart form: a `file` (or `media`) part plus optional
/// `modality` and `text` fields.
pub(crate) struct FormUpload {
    pub modality: Option<Modality>,
    pub text: Option<String>,
    pub file: Option<Media>,
}

pub(crate) async fn read_form(req: Request, state: &AppState) -> ApiResult<FormUpload> {
    let mut form = Multipart::from_request(req, state)
        .await
        .map_err(|e| ApiError::bad_request(e.body_text()))?;
    let mut out = FormUpload {
        modality: None,
        text: None,
        file: None,
    };
    while let Some(field) = form.next_field().await? {
        match field.name().unwrap_or_default() {
            "modality" => out.modality = Some(parse_modality(&field.text().await?)?),
            "text" => out.text = Some(field.text().await?),
            "file" | "media" => {
                let mime = field
                    .content_type()
                    .unwrap_or("application/octet-stream")
                    .to_ascii_lowercase();
                let bytes = field.bytes().await?;
                out.file = Some(Media::new(mime, bytes.to_vec()));
            }
            other => return Err(ApiError::validation(format!("unexpected form field `{other}`"))),
        }
    }
    Ok(out)
}

/// Accepts multipart media, a JSON `{"modality", "text"}` body, a
/// `text/plain` body, or a raw `image/*` / `audio/*` body.
async fn log_payload(req: Request, state: &AppState) -> ApiResult<(Modality, Media)> {
    let ct = content_type(&req);
    if ct == "multipart/form-data" {
        let form = read_form(req, state).await?;
        return match (form.file, form.text) {
            (Some(media), _) => {
                let modality = match form.modality {
                    Some(m) => m,
                    None => modality_for_mime(&media.mime).ok_or_else(|| {
                        ApiError::validation(format!("cannot infer modality from `{}`", media.mime))
                    })?,
                };
                Ok((modality, media))
            }
            (None, Some(text)) => Ok((form.modality.unwrap_or(Modality::Text), Media::text(text))),
            (None, None) => Err(ApiError::validation("form needs a `file` or `text` field")),
        };
    }
    let body = raw_body(req, state).await?;
    match ct.as_str() {
        "application/json" => {
            let b: TextLogBody = json_body(&body)?;
            Ok((b.modality.unwrap_or(Modality::Text), Media::text(b.text)))
        }
        "" | "text/plain" => {
            let text = String::from_utf8(body.to_vec()).map_err(|_| ApiError::validation("text body must be UTF-8"))?;
            Ok((Modality::Text, Media::text(text)))
        }
        other => match modality_for_mime(other) {
            Some(m @ (Modality::Image | Modality::Audio)) => Ok((m, Media::new(other, body.to_vec()))),
            _ => Err(ApiError::new(
                StatusCode::UNSUPPORTED_MEDIA_TYPE,
                "unsupported_media_type",
                format!("unsupported content type `{other}`"),
            )),
        },
    }
}

pub async fn start(
    State(state): State<AppState>,
    AuthUser(user): AuthUser,
    req: Request,
) -> ApiResult<Json<DraftView>> {
    let (modality, media) = log_payload(req, &state).await?;
    if media.bytes.len() > state.media_cap_bytes {
        return Err(ApiError::new(
            StatusCode::PAYLOAD_TOO_LARGE,
            "payload_too_large",
            format!("payload of {} bytes exceeds the {}-byte cap", media.bytes.len(), state.media_cap_bytes),
        ));
    }
    let draft = state.pipeline.start_log(user, modality, media).await?;
    Ok(Json(DraftView::from(&draft)))
}

fn draft_id(p: Result<Path<DraftId>, PathRejection>) -> ApiResult<DraftId> {
    let Path(id) = p?;
    Ok(id)
}

/// Drafts are visible only to their owner; anything else reads as unknown.
fn require_owner(state: &AppState, user: UserId, id: DraftId) -> ApiResult<()> {
    if state.pipeline.owns_draft(user, id) {
        Ok(())
    } else {
        Err(PipelineError::UnknownDraft(id).into())
    }
}

pub async fn draft(
    State(state): State<AppState>,
    AuthUser(user): AuthUser,
    id: Result<Path<DraftId>, PathRejection>,
) -> ApiResult<Json<DraftView>> {
    let id = draft_id(id)?;
    let d = state.pipeline.draft_for(user, id).await?;
    Ok(Json(DraftView::from(&d)))
}

pub async fn answer(
    State(state): State<AppState>,
    AuthUser(user): AuthUser,
    id: Result<Path<DraftId>, PathRejection>,
    body: Bytes,
) -> ApiResult<Json<DraftView>> {
    let id = draft_id(id)?;
    require_owner(&state, user, id)?;
    let b: AnswerBody = json_body(&body)?;
    let d = state.pipeline.answer_follow_up(id, &b.answer).await?;
    Ok(Json(DraftView::from(&d)))
}

pub async fn finalize(
    State(state): State<AppState>,
    AuthUser(user): AuthUser,
    id: Result<Path<DraftId>, PathRejection>,
) -> ApiResult<(StatusCode, Json<LogDetail>)> {
    let id = draft_id(id)?;
    require_owner(&state, user, id)?;
    let log = state.pipeline.finalize_log(id).await?;
    let detail = detail(&state, log)?;
    Ok((StatusCode::CREATED, Json(detail)))
}

pub async fn abandon(
    State(state): State<AppState>,
    AuthUser(user): AuthUser,
    id: Result<Path<DraftId>, PathRejection>,
) -> ApiResult<Json<DraftView>> {
    let id = draft_id(id)?;
    require_owner(&state, user, id)?;
    let d = state.pipeline.abandon(id).await?;
    Ok(Json(DraftView::from(&d)))
}

fn detail(state: &AppState, log: FoodLog) -> ApiResult<LogDetail> {
    let conversation = match log.conversation_id {
        Some(c) => Some(state.pipeline.store().get_conversation(c)?),
        None => None,
    };
    Ok(LogDetail { log, conversation })
}

fn log_id(p: Result<Path<LogId>, PathRejection>) -> ApiResult<LogId> {
    let Path(id) = p?;
    Ok(id)
}

fn owned(state: &AppState, user: UserId, id: LogId) -> ApiResult<FoodLog> {
    match state.pipeline.store().get_log(id) {
        Ok(log) if log.user_id == user => Ok(log),
        Ok(_) | Err(nutrilog_core::persistence::StorageError::NotFound(_)) => {
            Err(PipelineError::UnknownLog(id).into())
        }
        Err(e) => Err(e.into()),
    }
}

pub async fn read(
    State(state): State<AppState>,
    AuthUser(user): AuthUser,
    id: Result<Path<LogId>, PathRejection>,
) -> ApiResult<Json<LogDetail>> {
    let id = log_id(id)?;
    let log = owned(&state, user, id)?;
    Ok(Json(detail(&state, log)?))
}

pub async fn edit(
    State(state): State<AppState>,
    AuthUser(user): AuthUser,
    id: Result<Path<LogId>, PathRejection>,
    body: Bytes,
) -> ApiResult<Json<FoodLog>> {
    let id = log_id(id)?;
    let patch: Map<String, Value> = json_body(&body)?;
    Ok(Json(state.pipeline.edit_log(user, id, &patch)?))
}

pub async fn delete(
    State(state): State<AppState>,
    AuthUser(user): AuthUser,
    id: Result<Path<LogId>, PathRejection>,
) -> ApiResult<Json<FoodLog>> {
    let id = log_id(id)?;
    Ok(Json(state.pipeline.delete_log(user, id)?))
}

#[derive(Debug, Deserialize)]
pub struct ListParams {
    pub user: Option<UserId>,
    pub from: Option<String>,
    pub to: Option<String>,
    pub cursor: Option<String>,
    pub limit: Option<usize>,
    #[serde(default)]
    pub include_deleted: bool,
}

/// An RFC 3339 instant, or a calendar date in the service's local offset.
/// A date `to` bound covers that whole day.
pub(crate) fn parse_bound(state: &AppState, s: &str, end: bool, name: &str) -> ApiResult<DateTime<Utc>> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.with_timezone(&Utc));
    }
    let date = NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map_err(|_| ApiError::bad_request(format!("`{name}` must be an RFC 3339 time or YYYY-MM-DD date")))?;
    let date = if end { date.succ_opt().unwrap_or(date) } else { date };
    Ok(day_window(date, state.pipeline.config().local_offset).from)
}

pub async fn list(
    State(state): State<AppState>,
    AuthUser(user): AuthUser,
    params: Result<Query<ListParams>, QueryRejection>,
) -> ApiResult<Json<LogPageView>> {
    let Query(p) = params?;
    same_user(user, p.user)?;
    let mut window = TimeWindow::all();
    if let Some(from) = &p.from {
        window.from = parse_bound(&state, from, false, "from")?;
    }
    if let Some(to) = &p.to {
        window.to = parse_bound(&state, to, true, "to")?;
    }
    if window.from > window.to {
        return Err(ApiError::bad_request("`from` is after `to`"));
    }
    let limit = p.limit.unwrap_or(DEFAULT_PAGE_SIZE);
    if limit == 0 || limit > MAX_PAGE_SIZE {
        return Err(ApiError::bad_request(format!("`limit` must be between 1 and {MAX_PAGE_SIZE}")));
    }
    let after = match &p.cursor {
        Some(c) => Some(LogCursor::decode(c).ok_or_else(|| ApiError::bad_request("malformed cursor"))?),
        None => None,
    };
    let query = LogQuery {
        include_deleted: p.include_deleted,
        after,
        limit: Some(limit),
        ..LogQuery::for_user(user).window(window)
    };
    let page = state.pipeline.store().list_logs(&query)?;
    Ok(Json(LogPageView {
        logs: page.logs,
        next_cursor: page.next_cursor.map(|c| c.encode()),
    }))
}
