use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::nutrition::NutritionFacts;
use super::records::FoodLog;

/// Half-open time interval `[from, to)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub from: DateTime<Utc>,
    pub to: DateTime<Utc>,
}

impl TimeWindow {
    pub fn new(from: DateTime<Utc>, to: DateTime<Utc>) -> Self {
        TimeWindow { from, to }
    }

    /// A window covering every representable timestamp.
    pub fn all() -> Self {
        TimeWindow {
            from: DateTime::<Utc>::MIN_UTC,
            to: DateTime::<Utc>::MAX_UTC,
        }
    }

    pub fn contains(&self, t: DateTime<Utc>) -> bool {
        self.from <= t && t < self.to
    }
}

/// Field-wise nutrition total of the non-deleted logs inside `window`.
pub fn nutrition_sum<'a, I>(logs: I, window: TimeWindow) -> NutritionFacts
where
    I: IntoIterator<Item = &'a FoodLog>,
{
    let mut total = NutritionFacts::zero();
    for log in logs {
        if !log.deleted && window.contains(log.logged_at) {
            total.accumulate(&log.nutrition);
        }
    }
    total
}
