//! The error body shared by every endpoint: `{"error": {"code", "message"}}`.

use axum::extract::multipart::MultipartError;
use axum::extract::rejection::{JsonRejection, PathRejection, QueryRejection};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use nutrilog_core::persistence::{MediaError, StorageError};
use nutrilog_core::pipeline::PipelineError;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

#[derive(Serialize)]
struct Body<'a> {
    error: Detail<'a>,
}

#[derive(Serialize)]
struct Detail<'a> {
    code: &'a str,
    message: &'a str,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn unauthorized() -> Self {
        Self::new(StatusCode::UNAUTHORIZED, "unauthorized", "a valid bearer token is required")
    }

    pub fn forbidden() -> Self {
        Self::new(StatusCode::FORBIDDEN, "forbidden", "this resource belongs to another user")
    }

    pub fn not_found(what: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", what)
    }

    pub fn validation(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "validation_failed", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            tracing::error!(code = self.code, "{}", self.message);
        }
        let body = Body {
            error: Detail {
                code: self.code,
                message: &self.message,
            },
        };
        (self.status, Json(body)).into_response()
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        let message = e.to_string();
        let (status, code) = match &e {
            PipelineError::UnknownUser(_) => (StatusCode::NOT_FOUND, "unknown_user"),
            PipelineError::UnknownDraft(_) => (StatusCode::NOT_FOUND, "unknown_draft"),
            PipelineError::UnknownLog(_) => (StatusCode::NOT_FOUND, "unknown_log"),
            PipelineError::LogDeleted(_) => (StatusCode::CONFLICT, "log_deleted"),
            PipelineError::WrongState { .. } => (StatusCode::CONFLICT, "wrong_state"),
            PipelineError::EmptyPayload => (StatusCode::UNPROCESSABLE_ENTITY, "empty_payload"),
            PipelineError::AnswerNotInOptions { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "answer_not_in_options"),
            PipelineError::EmptyAnswer => (StatusCode::UNPROCESSABLE_ENTITY, "empty_answer"),
            PipelineError::TooManyDrafts { .. } => (StatusCode::TOO_MANY_REQUESTS, "too_many_drafts"),
            PipelineError::InvalidProfile(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_profile"),
            PipelineError::InvalidPatch(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_patch"),
            PipelineError::Gateway(g) if g.is_provider_failure() => (StatusCode::BAD_GATEWAY, "provider_unavailable"),
            PipelineError::Gateway(_) => (StatusCode::BAD_GATEWAY, "generation_failed"),
            PipelineError::Storage(s) => return s_error(s, message),
            PipelineError::Media(m) => return m_error(m, message),
        };
        ApiError::new(status, code, message)
    }
}

fn s_error(e: &StorageError, message: String) -> ApiError {
    match e {
        StorageError::NotFound(_) => ApiError::new(StatusCode::NOT_FOUND, "not_found", message),
        StorageError::Duplicate(_) => ApiError::new(StatusCode::CONFLICT, "duplicate", message),
        StorageError::ForeignKey(_) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_reference", message),
        _ => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "storage_error", message),
    }
}

fn m_error(e: &MediaError, message: String) -> ApiError {
    match e {
        MediaError::Oversize { .. } => ApiError::new(StatusCode::PAYLOAD_TOO_LARGE, "payload_too_large", message),
        MediaError::Empty => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "empty_payload", message),
        MediaError::MissingKey(_) | MediaError::InvalidKey(_) => {
            ApiError::new(StatusCode::NOT_FOUND, "media_not_found", message)
        }
        MediaError::Io(_) => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "media_error", message),
    }
}

impl From<StorageError> for ApiError {
    fn from(e: StorageError) -> Self {
        let message = e.to_string();
        s_error(&e, message)
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        match r {
            JsonRejection::JsonDataError(e) => ApiError::validation(e.body_text()),
            JsonRejection::BytesRejection(e) if e.status() == StatusCode::PAYLOAD_TOO_LARGE => {
                ApiError::new(StatusCode::PAYLOAD_TOO_LARGE, "payload_too_large", e.body_text())
            }
            other => ApiError::bad_request(other.body_text()),
        }
    }
}

impl From<QueryRejection> for ApiError {
    fn from(r: QueryRejection) -> Self {
        ApiError::bad_request(r.body_text())
    }
}

impl From<PathRejection> for ApiError {
    fn from(_: PathRejection) -> Self {
        ApiError::not_found("no such resource")
    }
}

impl From<MultipartError> for ApiError {
    fn from(e: MultipartError) -> Self {
        if e.status() == StatusCode::PAYLOAD_TOO_LARGE {
            ApiError::new(StatusCode::PAYLOAD_TOO_LARGE, "payload_too_large", e.body_text())
        } else {
            ApiError::bad_request(e.body_text())
        }
    }
}

pub type ApiResult<T> = Result<T, ApiError>;
