//! Profile and goals.

use axum::body::Bytes;
use axum::extract::rejection::PathRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::Json;
use nutrilog_core::domain::{UserId, UserProfile};
use serde_json::{Map, Value};

use super::json_body;
use crate::auth::{hash_token, new_token, AuthUser};
use crate::error::{ApiError, ApiResult};
use crate::views::{CreatedUser, NewUser, UserView};
use crate::AppState;

pub async fn create(State(state): State<AppState>, body: Bytes) -> ApiResult<(StatusCode, Json<CreatedUser>)> {
    let fields: NewUser = if body.iter().all(u8::is_ascii_whitespace) {
        NewUser::default()
    } else {
        json_body(&body)?
    };
    let user_id = UserId::new();
    let profile = fields.into_profile(user_id);
    let prompt = state.pipeline.register_user(&profile)?;
    let token = new_token();
    state.pipeline.store().insert_token(&hash_token(&token), user_id)?;
    tracing::info!(%user_id, "user created");
    Ok((
        StatusCode::CREATED,
        Json(CreatedUser {
            user_id,
            token,
            user: profile,
            personalized_prompt: prompt,
        }),
    ))
}

/// Unknown ids are 404 and other users' ids 403.
fn authorize(state: &AppState, caller: UserId, id: Result<Path<UserId>, PathRejection>) -> ApiResult<UserId> {
    let Path(id) = id?;
    if id == caller {
        return Ok(id);
    }
    if state.pipeline.store().user_exists(id)? {
        Err(ApiError::forbidden())
    } else {
        Err(ApiError::new(StatusCode::NOT_FOUND, "unknown_user", format!("unknown user {id}")))
    }
}

pub async fn read(
    State(state): State<AppState>,
    AuthUser(caller): AuthUser,
    id: Result<Path<UserId>, PathRejection>,
) -> ApiResult<Json<UserView>> {
    let id = authorize(&state, caller, id)?;
    let store = state.pipeline.store();
    Ok(Json(UserView {
        user: store.get_user(id)?,
        personalized_prompt: store.get_personalized_prompt(id)?,
    }))
}

pub async fn update(
    State(state): State<AppState>,
    AuthUser(caller): AuthUser,
    id: Result<Path<UserId>, PathRejection>,
    body: Bytes,
) -> ApiResult<Json<UserView>> {
    let id = authorize(&state, caller, id)?;
    let patch: Map<String, Value> = json_body(&body)?;
    let mut profile = state.pipeline.store().get_user(id)?;
    apply_profile_patch(&mut profile, &patch).map_err(|errors| {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_profile", errors.join("; "))
    })?;
    let prompt = state.pipeline.update_user(&profile)?;
    Ok(Json(UserView {
        user: profile,
        personalized_prompt: Some(prompt),
    }))
}

fn number(key: &str, v: &Value, errors: &mut Vec<String>) -> Option<Option<f64>> {
    match v {
        Value::Null => Some(None),
        Value::Number(n) => n.as_f64().map(Some),
        _ => {
            errors.push(format!("{key} must be a number or null"));
            None
        }
    }
}

fn whole(key: &str, v: &Value, errors: &mut Vec<String>) -> Option<Option<u32>> {
    match v {
        Value::Null => Some(None),
        Value::Number(n) => match n.as_u64().and_then(|x| u32::try_from(x).ok()) {
            Some(x) => Some(Some(x)),
            None => {
                errors.push(format!("{key} must be a non-negative integer"));
                None
            }
        },
        _ => {
            errors.push(format!("{key} must be an integer or null"));
            None
        }
    }
}

/// Applies a partial profile. Present keys replace, `null` clears.
pub fn apply_profile_patch(profile: &mut UserProfile, patch: &Map<String, Value>) -> Result<(), Vec<String>> {
    let mut errors = Vec::new();
    for (key, v) in patch {
        match key.as_str() {
            "age" => {
                if let Some(x) = whole(key, v, &mut errors) {
                    profile.age = x;
                }
            }
            "tracking_history_months" => {
                if let Some(x) = whole(key, v, &mut errors) {
                    profile.tracking_history_months = x;
                }
            }
            "height_cm" | "weight_kg" | "target_calories" | "target_protein" | "target_water_ml" => {
                if let Some(x) = number(key, v, &mut errors) {
                    let slot = match key.as_str() {
                        "height_cm" => &mut profile.height_cm,
                        "weight_kg" => &mut profile.weight_kg,
                        "target_calories" => &mut profile.target_calories,
                        "target_protein" => &mut profile.target_protein,
                        _ => &mut profile.target_water_ml,
                    };
                    *slot = x;
                }
            }
            "text_goals" => match v {
                Value::Null => profile.text_goals.clear(),
                Value::String(s) => profile.text_goals = s.clone(),
                _ => errors.push("text_goals must be a string or null".into()),
            },
            "user_id" => errors.push("user_id cannot be changed".into()),
            other => errors.push(format!("unknown field `{other}`")),
        }
    }
    errors.extend(profile.violations());
    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors)
    }
}
