//! Per-user intake summaries for the dashboard and the trends view.

use chrono::{Duration, FixedOffset, NaiveDate, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use super::{local_date, ModalityCounts};
use crate::domain::{nutrition_sum, FoodLog, NutritionFacts, TimeWindow, UserProfile};

/// Intake against a target. `remaining` and `fraction` need a target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub consumed: f64,
    pub target: Option<f64>,
    pub remaining: Option<f64>,
    pub fraction: Option<f64>,
}

impl Progress {
    fn new(consumed: f64, target: Option<f64>) -> Self {
        Progress {
            consumed,
            target,
            remaining: target.map(|t| t - consumed),
            fraction: target.map(|t| consumed / t),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DashboardReport {
    pub date: NaiveDate,
    pub log_count: usize,
    pub totals: NutritionFacts,
    pub calories: Progress,
    pub protein: Progress,
    pub target_water_ml: Option<f64>,
    pub logs: Vec<FoodLog>,
}

/// The window covering local day `date`.
pub fn day_window(date: NaiveDate, offset: FixedOffset) -> TimeWindow {
    let start = offset
        .from_local_datetime(&date.and_hms_opt(0, 0, 0).expect("midnight"))
        .single()
        .expect("fixed offsets are unambiguous")
        .with_timezone(&Utc);
    TimeWindow::new(start, start + Duration::days(1))
}

/// One day's intake for `profile`, deleted logs excluded.
pub fn dashboard(
    profile: &UserProfile,
    logs: &[FoodLog],
    date: NaiveDate,
    offset: FixedOffset,
) -> DashboardReport {
    let window = day_window(date, offset);
    let mut day: Vec<FoodLog> = logs
        .iter()
        .filter(|l| l.user_id == profile.user_id && !l.deleted && window.contains(l.logged_at))
        .cloned()
        .collect();
    day.sort_by_key(|l| l.logged_at);
    let totals = nutrition_sum(&day, window);
    DashboardReport {
        date,
        log_count: day.len(),
        calories: Progress::new(totals.calories, profile.target_calories),
        protein: Progress::new(totals.protein, profile.target_protein),
        target_water_ml: profile.target_water_ml,
        totals,
        logs: day,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendDay {
    pub date: NaiveDate,
    pub log_count: usize,
    pub modality: ModalityCounts,
    pub calories: f64,
    pub protein: f64,
    pub carbohydrates: f64,
    pub fat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendReport {
    pub from: NaiveDate,
    pub to: NaiveDate,
    pub target_calories: Option<f64>,
    pub target_protein: Option<f64>,
    pub days: Vec<TrendDay>,
    pub mean_calories: f64,
    pub mean_protein: f64,
}

/// Daily totals over the `days` local days ending on `to`, every day present.
pub fn trends(
    profile: &UserProfile,
    logs: &[FoodLog],
    to: NaiveDate,
    days: u32,
    offset: FixedOffset,
) -> TrendReport {
    let days = days.max(1);
    let from = to - Duration::days(i64::from(days) - 1);
    let mut out = Vec::with_capacity(days as usize);
    let mut d = from;
    while d <= to {
        let window = day_window(d, offset);
        let mine: Vec<&FoodLog> = logs
            .iter()
            .filter(|l| l.user_id == profile.user_id && !l.deleted && window.contains(l.logged_at))
            .collect();
        let mut modality = ModalityCounts::default();
        for l in &mine {
            modality.bump(l.modality);
        }
        let total = nutrition_sum(mine.iter().copied(), window);
        debug_assert!(mine.iter().all(|l| local_date(l.logged_at, offset) == d));
        out.push(TrendDay {
            date: d,
            log_count: mine.len(),
            modality,
            calories: total.calories,
            protein: total.protein,
            carbohydrates: total.carbohydrates,
            fat: total.fat,
        });
        d += Duration::days(1);
    }
    let n = out.len() as f64;
    TrendReport {
        from,
        to,
        target_calories: profile.target_calories,
        target_protein: profile.target_protein,
        mean_calories: out.iter().map(|d| d.calories).sum::<f64>() / n,
        mean_protein: out.iter().map(|d| d.protein).sum::<f64>() / n,
        days: out,
    }
}
