//! Engagement statistics over stored logs.
//!
//! Every function here is a pure function of its input rows. Days are
//! bucketed in a caller-supplied UTC offset.

mod chart;
mod reports;

use std::collections::{BTreeMap, HashMap};

use chrono::{DateTime, Duration, FixedOffset, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::domain::{FoodLog, LogId, Modality, UserId, UserProfile};
use crate::gateway::{Gateway, QuestionCategory};

pub use chart::{bar_chart, grouped_bar_chart, line_chart, timeline_chart, Series};
pub use reports::{dashboard, day_window, trends, DashboardReport, Progress, TrendDay, TrendReport};

/// Default experience threshold for cohort splits.
pub const EXPERIENCED_MONTHS: u32 = 6;

pub fn utc() -> FixedOffset {
    FixedOffset::east_opt(0).expect("zero offset")
}

pub fn local_date(t: DateTime<Utc>, offset: FixedOffset) -> NaiveDate {
    t.with_timezone(&offset).date_naive()
}

/// Edit and delete counts with their rates. Rates are `None` without logs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EditDeleteRates {
    pub total: usize,
    pub edited: usize,
    pub deleted: usize,
    pub edit_rate: Option<f64>,
    pub delete_rate: Option<f64>,
}

/// Deleted logs count toward the denominator.
pub fn edit_delete_rates(logs: &[FoodLog]) -> EditDeleteRates {
    let total = logs.len();
    let edited = logs.iter().filter(|l| l.edited).count();
    let deleted = logs.iter().filter(|l| l.deleted).count();
    let rate = |n: usize| (total > 0).then(|| n as f64 / total as f64);
    EditDeleteRates {
        total,
        edited,
        deleted,
        edit_rate: rate(edited),
        delete_rate: rate(deleted),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModalityCounts {
    pub image: usize,
    pub text: usize,
    pub audio: usize,
}

impl ModalityCounts {
    pub fn get(&self, m: Modality) -> usize {
        match m {
            Modality::Image => self.image,
            Modality::Text => self.text,
            Modality::Audio => self.audio,
        }
    }

    pub(crate) fn bump(&mut self, m: Modality) {
        match m {
            Modality::Image => self.image += 1,
            Modality::Text => self.text += 1,
            Modality::Audio => self.audio += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.image + self.text + self.audio
    }
}

/// Logs per local day, deleted logs included.
pub fn daily_counts(logs: &[FoodLog], offset: FixedOffset) -> BTreeMap<NaiveDate, usize> {
    let mut out = BTreeMap::new();
    for log in logs {
        *out.entry(local_date(log.logged_at, offset)).or_insert(0) += 1;
    }
    out
}

/// Logs per local day split by modality.
pub fn modality_timeseries(
    logs: &[FoodLog],
    offset: FixedOffset,
) -> BTreeMap<NaiveDate, ModalityCounts> {
    let mut out: BTreeMap<NaiveDate, ModalityCounts> = BTreeMap::new();
    for log in logs {
        out.entry(local_date(log.logged_at, offset))
            .or_default()
            .bump(log.modality);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineEvent {
    pub at: DateTime<FixedOffset>,
    pub modality: Modality,
    pub log_id: LogId,
}

/// One day's logs in time order.
pub fn day_timeline(logs: &[FoodLog], date: NaiveDate, offset: FixedOffset) -> Vec<TimelineEvent> {
    let mut out: Vec<TimelineEvent> = logs
        .iter()
        .filter(|l| local_date(l.logged_at, offset) == date)
        .map(|l| TimelineEvent {
            at: l.logged_at.with_timezone(&offset),
            modality: l.modality,
            log_id: l.log_id,
        })
        .collect();
    out.sort_by(|a, b| a.at.cmp(&b.at).then(a.log_id.0.cmp(&b.log_id.0)));
    out
}

/// Follow-up questions asked per local day, from per-log turn counts.
pub fn follow_up_counts(
    logs: &[FoodLog],
    turns: &HashMap<LogId, usize>,
    offset: FixedOffset,
) -> BTreeMap<NaiveDate, usize> {
    let mut out = BTreeMap::new();
    for log in logs {
        let n = turns.get(&log.log_id).copied().unwrap_or(0);
        *out.entry(local_date(log.logged_at, offset)).or_insert(0) += n;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryShare {
    pub category: QuestionCategory,
    pub label: String,
    pub count: usize,
    /// Percentage of classified questions, `None` when nothing was classified.
    pub percentage: Option<f64>,
}

/// Counts over the five question categories plus a bucket for questions
/// that could not be classified. Failures are left out of percentages.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CategoryHistogram {
    counts: [usize; 5],
    pub failed: usize,
}

impl CategoryHistogram {
    pub fn add(&mut self, category: QuestionCategory) {
        let i = QuestionCategory::ALL
            .iter()
            .position(|c| *c == category)
            .expect("category is listed");
        self.counts[i] += 1;
    }

    pub fn count(&self, category: QuestionCategory) -> usize {
        QuestionCategory::ALL
            .iter()
            .position(|c| *c == category)
            .map(|i| self.counts[i])
            .unwrap_or(0)
    }

    pub fn classified(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.classified() == 0 && self.failed == 0
    }

    pub fn percentage(&self, category: QuestionCategory) -> Option<f64> {
        let total = self.classified();
        (total > 0).then(|| 100.0 * self.count(category) as f64 / total as f64)
    }

    pub fn shares(&self) -> Vec<CategoryShare> {
        QuestionCategory::ALL
            .iter()
            .map(|&c| CategoryShare {
                category: c,
                label: c.label().to_string(),
                count: self.count(c),
                percentage: self.percentage(c),
            })
            .collect()
    }
}

pub fn category_histogram<I, E>(outcomes: I) -> CategoryHistogram
where
    I: IntoIterator<Item = Result<QuestionCategory, E>>,
{
    let mut h = CategoryHistogram::default();
    for outcome in outcomes {
        match outcome {
            Ok(c) => h.add(c),
            Err(_) => h.failed += 1,
        }
    }
    h
}

/// Classifies each question with the gateway and tallies the categories.
pub async fn follow_up_category_distribution(
    questions: &[String],
    gateway: &Gateway,
) -> CategoryHistogram {
    let mut outcomes = Vec::with_capacity(questions.len());
    for q in questions {
        let r = gateway.classify_question(q).await;
        if let Err(e) = &r {
            tracing::warn!(question = %q, error = %e, "classification failed");
        }
        outcomes.push(r);
    }
    category_histogram(outcomes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortDay {
    pub date: NaiveDate,
    pub logs_per_user: f64,
    pub follow_ups_per_user: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortStats {
    pub users: usize,
    pub mean_daily_logs: f64,
    pub mean_daily_follow_ups: f64,
    pub days: Vec<CohortDay>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortReport {
    pub threshold_months: u32,
    pub experienced: Option<CohortStats>,
    pub novice: Option<CohortStats>,
    /// Users left out because their tracking history is unknown.
    pub excluded_users: usize,
}

/// Splits users at `threshold_months` of prior tracking history.
///
/// For each day in `[first, last]` a cohort's value is its total that day
/// divided by its size; reported means average those values over the days.
/// The day range defaults to the span of all given logs.
pub fn cohort_split(
    users: &[UserProfile],
    logs: &[FoodLog],
    turns: &HashMap<LogId, usize>,
    threshold_months: u32,
    days: Option<(NaiveDate, NaiveDate)>,
    offset: FixedOffset,
) -> CohortReport {
    let mut cohort_of: HashMap<UserId, bool> = HashMap::new();
    let mut excluded = 0;
    for u in users {
        match u.tracking_history_months {
            Some(m) => {
                cohort_of.insert(u.user_id, m >= threshold_months);
            }
            None => excluded += 1,
        }
    }
    if excluded > 0 {
        tracing::warn!(excluded, "users without tracking history left out of cohorts");
    }
    let span = days.or_else(|| {
        let dates = logs.iter().map(|l| local_date(l.logged_at, offset));
        let min = dates.clone().min()?;
        Some((min, dates.max()?))
    });

    let stats = |experienced: bool| -> Option<CohortStats> {
        let size = cohort_of.values().filter(|&&e| e == experienced).count();
        if size == 0 {
            return None;
        }
        let mut per_day: BTreeMap<NaiveDate, (usize, usize)> = BTreeMap::new();
        if let Some((first, last)) = span {
            let mut d = first;
            while d <= last {
                per_day.insert(d, (0, 0));
                d += Duration::days(1);
            }
        }
        for log in logs {
            if cohort_of.get(&log.user_id) != Some(&experienced) {
                continue;
            }
            if let Some(slot) = per_day.get_mut(&local_date(log.logged_at, offset)) {
                slot.0 += 1;
                slot.1 += turns.get(&log.log_id).copied().unwrap_or(0);
            }
        }
        let days: Vec<CohortDay> = per_day
            .into_iter()
            .map(|(date, (l, f))| CohortDay {
                date,
                logs_per_user: l as f64 / size as f64,
                follow_ups_per_user: f as f64 / size as f64,
            })
            .collect();
        let n = days.len().max(1) as f64;
        Some(CohortStats {
            users: size,
            mean_daily_logs: days.iter().map(|d| d.logs_per_user).sum::<f64>() / n,
            mean_daily_follow_ups: days.iter().map(|d| d.follow_ups_per_user).sum::<f64>() / n,
            days,
        })
    };

    CohortReport {
        threshold_months,
        experienced: stats(true),
        novice: stats(false),
        excluded_users: excluded,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyEngagement {
    pub date: NaiveDate,
    pub logs: usize,
    pub modality: ModalityCounts,
    pub follow_ups: usize,
}

/// Everything the engagement screens and plots draw from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngagementReport {
    pub utc_offset_seconds: i32,
    pub days: Vec<DailyEngagement>,
    pub rates: EditDeleteRates,
    pub categories: CategoryHistogram,
    pub category_shares: Vec<CategoryShare>,
}

pub fn engagement_report(
    logs: &[FoodLog],
    turns: &HashMap<LogId, usize>,
    categories: CategoryHistogram,
    offset: FixedOffset,
) -> EngagementReport {
    let totals = daily_counts(logs, offset);
    let modality = modality_timeseries(logs, offset);
    let follow_ups = follow_up_counts(logs, turns, offset);
    let days = totals
        .iter()
        .map(|(date, &n)| DailyEngagement {
            date: *date,
            logs: n,
            modality: modality.get(date).copied().unwrap_or_default(),
            follow_ups: follow_ups.get(date).copied().unwrap_or(0),
        })
        .collect();
    EngagementReport {
        utc_offset_seconds: offset.local_minus_utc(),
        days,
        rates: edit_delete_rates(logs),
        category_shares: categories.shares(),
        categories,
    }
}
