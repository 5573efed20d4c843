//! Dashboard and trend screens, passed through from analytics unchanged.

use axum::extract::rejection::QueryRejection;
use axum::extract::{Query, State};
use axum::Json;
use chrono::{FixedOffset, NaiveDate};
use nutrilog_core::analytics::{dashboard as dashboard_report, day_window, trends as trend_report, DashboardReport, TrendReport};
use nutrilog_core::domain::{TimeWindow, UserId};
use nutrilog_core::persistence::LogQuery;
use serde::Deserialize;

use super::same_user;
use crate::auth::AuthUser;
use crate::config::offset_from_minutes;
use crate::error::{ApiError, ApiResult};
use crate::AppState;

pub const DEFAULT_TREND_DAYS: u32 = 7;
pub const MAX_TREND_DAYS: u32 = 366;

#[derive(Debug, Deserialize)]
pub struct DashboardParams {
    pub user: Option<UserId>,
    pub date: Option<NaiveDate>,
    pub tz_offset_minutes: Option<i32>,
}

#[derive(Debug, Deserialize)]
pub struct TrendParams {
    pub user: Option<UserId>,
    /// Number of days ending at `to`.
    pub window: Option<u32>,
    pub to: Option<NaiveDate>,
    pub tz_offset_minutes: Option<i32>,
}

fn offset(state: &AppState, minutes: Option<i32>) -> ApiResult<FixedOffset> {
    match minutes {
        None => Ok(state.pipeline.config().local_offset),
        Some(m) => offset_from_minutes(m).ok_or_else(|| ApiError::bad_request("`tz_offset_minutes` is out of range")),
    }
}

fn today(state: &AppState, offset: FixedOffset) -> NaiveDate {
    state.pipeline.now().with_timezone(&offset).date_naive()
}

pub async fn dashboard(
    State(state): State<AppState>,
    AuthUser(user): AuthUser,
    params: Result<Query<DashboardParams>, QueryRejection>,
) -> ApiResult<Json<DashboardReport>> {
    let Query(p) = params?;
    same_user(user, p.user)?;
    let offset = offset(&state, p.tz_offset_minutes)?;
    let date = p.date.unwrap_or_else(|| today(&state, offset));
    let store = state.pipeline.store();
    let profile = store.get_user(user)?;
    let logs = store.all_logs(&LogQuery::for_user(user).window(day_window(date, offset)))?;
    Ok(Json(dashboard_report(&profile, &logs, date, offset)))
}

pub async fn trends(
    State(state): State<AppState>,
    AuthUser(user): AuthUser,
    params: Result<Query<TrendParams>, QueryRejection>,
) -> ApiResult<Json<TrendReport>> {
    let Query(p) = params?;
    same_user(user, p.user)?;
    let offset = offset(&state, p.tz_offset_minutes)?;
    let days = p.window.unwrap_or(DEFAULT_TREND_DAYS);
    if days == 0 || days > MAX_TREND_DAYS {
        return Err(ApiError::bad_request(format!("`window` must be between 1 and {MAX_TREND_DAYS}")));
    }
    let to = p.to.unwrap_or_else(|| today(&state, offset));
    let first = to - chrono::Duration::days(i64::from(days) - 1);
    let window = TimeWindow::new(day_window(first, offset).from, day_window(to, offset).to);
    let store = state.pipeline.store();
    let profile = store.get_user(user)?;
    let logs = store.all_logs(&LogQuery::for_user(user).window(window))?;
    Ok(Json(trend_report(&profile, &logs, to, days, offset)))
}
