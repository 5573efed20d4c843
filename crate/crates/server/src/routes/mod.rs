//! Request handlers, grouped by screen.

pub mod health;
pub mod logs;
pub mod receipts;
pub mod reports;
pub mod users;

use axum::body::Bytes;
use nutrilog_core::domain::UserId;
use serde::de::DeserializeOwned;
use serde_json::error::Category;

use crate::error::{ApiError, ApiResult};

/// Syntax errors are 400; well-formed JSON of the wrong shape is 422.
pub(crate) fn json_body<T: DeserializeOwned>(bytes: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(bytes).map_err(|e| match e.classify() {
        Category::Data => ApiError::validation(e.to_string()),
        _ => ApiError::bad_request(format!("malformed JSON: {e}")),
    })
}

/// Rejects a `user` query parameter naming someone other than the caller.
pub(crate) fn same_user(caller: UserId, requested: Option<UserId>) -> ApiResult<()> {
    match requested {
        Some(u) if u != caller => Err(ApiError::forbidden()),
        _ => Ok(()),
    }
}
