use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use chrono::{DateTime, Duration, FixedOffset, NaiveDate, TimeZone, Utc};
use proptest::prelude::*;

use nutrilog_core::analytics::{
    self, category_histogram, cohort_split, daily_counts, dashboard, day_timeline,
    edit_delete_rates, engagement_report, follow_up_category_distribution, follow_up_counts,
    modality_timeseries, trends, CategoryHistogram,
};
use nutrilog_core::domain::{
    FoodLog, LogId, MealType, Modality, NutritionFacts, UserId, UserProfile,
};
use nutrilog_core::gateway::{
    Gateway, MockProvider, ModelProvider, ModelRequest, ProviderError, QuestionCategory,
    RetryPolicy,
};

fn base() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 4, 1, 0, 0, 0).unwrap()
}

fn log(user_id: UserId, at: DateTime<Utc>, modality: Modality, calories: f64) -> FoodLog {
    FoodLog {
        log_id: LogId::new(),
        user_id,
        meal_name: "meal".into(),
        ingredients: vec!["a".into()],
        serving_size: "1 serving".into(),
        meal_type: MealType::Lunch,
        logged_at: at,
        modality,
        media_ref: None,
        nutrition: NutritionFacts {
            calories,
            protein: calories / 20.0,
            carbohydrates: calories / 10.0,
            fat: calories / 40.0,
            ..NutritionFacts::zero()
        },
        conversation_id: None,
        edited: false,
        deleted: false,
    }
}

fn offset(hours: i32) -> FixedOffset {
    FixedOffset::east_opt(hours * 3600).unwrap()
}

fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

#[test]
fn deployment_corpus_rates() {
    let user = UserId::new();
    let mut logs: Vec<FoodLog> = (0..502)
        .map(|i| log(user, base() + Duration::minutes(i * 97), Modality::Text, 400.0))
        .collect();
    for l in logs.iter_mut().step_by(4).take(104) {
        l.edited = true;
    }
    for l in logs.iter_mut().skip(1).step_by(7).take(29) {
        l.deleted = true;
    }
    let edited = logs.iter().filter(|l| l.edited).count();
    let deleted = logs.iter().filter(|l| l.deleted).count();
    assert_eq!((edited, deleted), (104, 29));

    let r = edit_delete_rates(&logs);
    assert_eq!((r.total, r.edited, r.deleted), (502, 104, 29));
    let edit_pct = 100.0 * r.edit_rate.unwrap();
    let delete_pct = 100.0 * r.delete_rate.unwrap();
    assert!((edit_pct - 20.7).abs() <= 0.05, "{edit_pct}");
    assert!((delete_pct - 5.8).abs() <= 0.05, "{delete_pct}");
}

#[test]
fn rates_undefined_without_logs() {
    let r = edit_delete_rates(&[]);
    assert_eq!(r.total, 0);
    assert_eq!(r.edit_rate, None);
    assert_eq!(r.delete_rate, None);
}

#[test]
fn category_distribution_matches_reported_counts() {
    let counts = [
        (QuestionCategory::QuantityPortion, 610, 34.3),
        (QuestionCategory::FoodTypeDetail, 566, 31.8),
        (QuestionCategory::PreparationSource, 357, 20.1),
        (QuestionCategory::ConsumptionRatio, 221, 12.4),
        (QuestionCategory::None, 25, 1.4),
    ];
    let mut outcomes: Vec<Result<QuestionCategory, ()>> = Vec::new();
    for (c, n, _) in counts {
        outcomes.extend(std::iter::repeat_n(Ok(c), n));
    }
    outcomes.extend(std::iter::repeat_n(Err(()), 9));
    let h = category_histogram(outcomes);
    assert_eq!(h.classified(), 1779);
    assert_eq!(h.failed, 9);
    for (c, n, pct) in counts {
        assert_eq!(h.count(c), n);
        assert_eq!(round1(h.percentage(c).unwrap()), pct, "{c}");
    }
    let total: f64 = h.shares().iter().map(|s| s.percentage.unwrap()).sum();
    assert!((total - 100.0).abs() < 1e-9);
}

#[test]
fn empty_histogram_has_no_percentages() {
    let h = CategoryHistogram::default();
    assert!(h.is_empty());
    assert!(h.shares().iter().all(|s| s.percentage.is_none() && s.count == 0));
}

struct Unparseable;

#[async_trait::async_trait]
impl ModelProvider for Unparseable {
    async fn complete(&self, _req: &ModelRequest) -> Result<String, ProviderError> {
        Ok("no idea".into())
    }

    async fn embed(&self, _media: &nutrilog_core::gateway::Media) -> Result<Vec<f64>, ProviderError> {
        Ok(vec![0.0])
    }
}

#[tokio::test]
async fn gateway_classification_fills_buckets() {
    let gw = Gateway::new(Arc::new(MockProvider::new(8)));
    let questions: Vec<String> = [
        "How many slices did you eat?",
        "What percentage of the food did you consume?",
        "Was it homemade or store bought?",
        "What kind of cheese was on it?",
        "Anything else to add?",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let h = follow_up_category_distribution(&questions, &gw).await;
    assert_eq!(h.classified(), 5);
    assert_eq!(h.failed, 0);
    for c in QuestionCategory::ALL {
        assert_eq!(h.count(c), 1, "{c}");
    }

    let broken = Gateway::new(Arc::new(Unparseable)).with_retry(RetryPolicy::none());
    let h = follow_up_category_distribution(&questions, &broken).await;
    assert_eq!(h.classified(), 0);
    assert_eq!(h.failed, 5);
}

#[test]
fn days_follow_the_reporting_offset() {
    let user = UserId::new();
    let late = Utc.with_ymd_and_hms(2024, 4, 1, 23, 30, 0).unwrap();
    let logs = vec![log(user, late, Modality::Image, 100.0)];
    let d1 = NaiveDate::from_ymd_opt(2024, 4, 1).unwrap();
    let d2 = NaiveDate::from_ymd_opt(2024, 4, 2).unwrap();
    assert_eq!(daily_counts(&logs, analytics::utc()).keys().collect::<Vec<_>>(), vec![&d1]);
    assert_eq!(daily_counts(&logs, offset(2)).keys().collect::<Vec<_>>(), vec![&d2]);
    assert_eq!(day_timeline(&logs, d2, offset(2)).len(), 1);
    assert!(day_timeline(&logs, d1, offset(2)).is_empty());
}

#[test]
fn timeline_is_time_ordered() {
    let user = UserId::new();
    let day = base() + Duration::days(3);
    let logs = vec![
        log(user, day + Duration::hours(19), Modality::Audio, 1.0),
        log(user, day + Duration::hours(8), Modality::Image, 1.0),
        log(user, day + Duration::hours(12), Modality::Text, 1.0),
        log(user, day + Duration::days(1), Modality::Text, 1.0),
    ];
    let t = day_timeline(&logs, day.date_naive(), analytics::utc());
    let mods: Vec<Modality> = t.iter().map(|e| e.modality).collect();
    assert_eq!(mods, vec![Modality::Image, Modality::Text, Modality::Audio]);
}

#[test]
fn follow_up_counts_sum_turns() {
    let user = UserId::new();
    let a = log(user, base() + Duration::hours(9), Modality::Image, 1.0);
    let b = log(user, base() + Duration::hours(13), Modality::Text, 1.0);
    let c = log(user, base() + Duration::days(1), Modality::Text, 1.0);
    let turns = HashMap::from([(a.log_id, 2), (b.log_id, 1)]);
    let logs = vec![a, b, c];
    let f = follow_up_counts(&logs, &turns, analytics::utc());
    assert_eq!(f.values().copied().collect::<Vec<_>>(), vec![3, 0]);
}

fn profile(months: Option<u32>) -> UserProfile {
    let mut p = UserProfile::new(UserId::new());
    p.tracking_history_months = months;
    p
}

/// Per-cohort, per-day totals divided by cohort size, averaged over days.
fn naive_cohort_mean(
    members: &[UserId],
    logs: &[FoodLog],
    days: &[NaiveDate],
) -> f64 {
    let mut sum = 0.0;
    for d in days {
        let n = logs
            .iter()
            .filter(|l| members.contains(&l.user_id) && l.logged_at.date_naive() == *d)
            .count();
        sum += n as f64 / members.len() as f64;
    }
    sum / days.len() as f64
}

#[test]
fn cohort_split_matches_hand_computation() {
    let users = vec![
        profile(Some(12)),
        profile(Some(6)),
        profile(Some(2)),
        profile(Some(0)),
        profile(Some(3)),
        profile(None),
    ];
    let mut logs = Vec::new();
    let per_user_per_day = [[3, 2, 4], [1, 1, 0], [2, 5, 1], [0, 1, 1], [4, 0, 0], [9, 9, 9]];
    for (u, counts) in users.iter().zip(per_user_per_day) {
        for (d, n) in counts.iter().enumerate() {
            for k in 0..*n {
                let at = base() + Duration::days(d as i64) + Duration::hours(8 + k as i64);
                logs.push(log(u.user_id, at, Modality::Text, 10.0));
            }
        }
    }
    let turns: HashMap<LogId, usize> = logs.iter().map(|l| (l.log_id, 1)).collect();
    let r = cohort_split(&users, &logs, &turns, 6, None, analytics::utc());
    assert_eq!(r.excluded_users, 1);

    let days: Vec<NaiveDate> = (0..3).map(|d| (base() + Duration::days(d)).date_naive()).collect();
    let exp: Vec<UserId> = users[..2].iter().map(|u| u.user_id).collect();
    let nov: Vec<UserId> = users[2..5].iter().map(|u| u.user_id).collect();

    let e = r.experienced.unwrap();
    let n = r.novice.unwrap();
    assert_eq!((e.users, n.users), (2, 3));
    assert_eq!(e.days.len(), 3);
    assert!((e.mean_daily_logs - naive_cohort_mean(&exp, &logs, &days)).abs() < 1e-12);
    assert!((n.mean_daily_logs - naive_cohort_mean(&nov, &logs, &days)).abs() < 1e-12);
    // one turn per log, so follow-ups mirror logs
    assert!((e.mean_daily_follow_ups - e.mean_daily_logs).abs() < 1e-12);
    assert!((e.mean_daily_logs - 11.0 / 6.0).abs() < 1e-12);
    assert!((n.mean_daily_logs - 14.0 / 9.0).abs() < 1e-12);
}

#[test]
fn single_cohort_when_everyone_is_experienced() {
    let users = vec![profile(Some(7)), profile(Some(24))];
    let logs = vec![log(users[0].user_id, base(), Modality::Text, 1.0)];
    let r = cohort_split(&users, &logs, &HashMap::new(), 6, None, analytics::utc());
    assert!(r.experienced.is_some());
    assert!(r.novice.is_none());
    assert_eq!(r.excluded_users, 0);
}

#[test]
fn explicit_day_range_includes_idle_days() {
    let users = vec![profile(Some(1))];
    let logs = vec![log(users[0].user_id, base(), Modality::Text, 1.0)];
    let range = (base().date_naive(), (base() + Duration::days(3)).date_naive());
    let r = cohort_split(&users, &logs, &HashMap::new(), 6, Some(range), analytics::utc());
    let n = r.novice.unwrap();
    assert_eq!(n.days.len(), 4);
    assert!((n.mean_daily_logs - 0.25).abs() < 1e-12);
}

#[test]
fn dashboard_totals_skip_deleted_and_other_users() {
    let mut p = UserProfile::new(UserId::new());
    p.target_calories = Some(2000.0);
    p.target_protein = Some(100.0);
    let other = UserId::new();
    let day = base() + Duration::days(5);
    let mut logs = vec![
        log(p.user_id, day + Duration::hours(8), Modality::Image, 500.0),
        log(p.user_id, day + Duration::hours(13), Modality::Text, 700.0),
        log(p.user_id, day + Duration::hours(20), Modality::Audio, 300.0),
        log(other, day + Duration::hours(9), Modality::Text, 900.0),
        log(p.user_id, day + Duration::days(1), Modality::Text, 50.0),
    ];
    logs[2].deleted = true;
    let d = dashboard(&p, &logs, day.date_naive(), analytics::utc());
    assert_eq!(d.log_count, 2);
    assert_eq!(d.totals.calories, 1200.0);
    assert_eq!(d.calories.remaining, Some(800.0));
    assert_eq!(d.calories.fraction, Some(0.6));
    assert_eq!(d.protein.consumed, 60.0);
    assert!(d.logs.windows(2).all(|w| w[0].logged_at <= w[1].logged_at));

    let bare = UserProfile::new(p.user_id);
    let d = dashboard(&bare, &logs, day.date_naive(), analytics::utc());
    assert_eq!(d.calories.remaining, None);
    assert_eq!(d.calories.fraction, None);
}

#[test]
fn trends_cover_every_day() {
    let p = UserProfile::new(UserId::new());
    let logs = vec![
        log(p.user_id, base() + Duration::hours(10), Modality::Image, 400.0),
        log(p.user_id, base() + Duration::days(2) + Duration::hours(10), Modality::Text, 600.0),
    ];
    let to = (base() + Duration::days(2)).date_naive();
    let t = trends(&p, &logs, to, 7, analytics::utc());
    assert_eq!(t.days.len(), 7);
    assert_eq!(t.from, to - Duration::days(6));
    let cal: Vec<f64> = t.days.iter().map(|d| d.calories).collect();
    assert_eq!(cal, vec![0.0, 0.0, 0.0, 0.0, 400.0, 0.0, 600.0]);
    assert!((t.mean_calories - 1000.0 / 7.0).abs() < 1e-9);
    assert_eq!(t.days[4].modality.image, 1);
}

#[test]
fn engagement_report_serializes() {
    let user = UserId::new();
    let logs = vec![
        log(user, base(), Modality::Image, 1.0),
        log(user, base() + Duration::days(1), Modality::Audio, 1.0),
    ];
    let r = engagement_report(&logs, &HashMap::new(), CategoryHistogram::default(), offset(-5));
    assert_eq!(r.utc_offset_seconds, -5 * 3600);
    assert_eq!(r.days.len(), 2);
    let v = serde_json::to_value(&r).unwrap();
    assert_eq!(v["category_shares"].as_array().unwrap().len(), 5);
}

fn arb_modality() -> impl Strategy<Value = Modality> {
    prop_oneof![Just(Modality::Image), Just(Modality::Text), Just(Modality::Audio)]
}

proptest! {
    #[test]
    fn daily_buckets_partition_logs(
        entries in prop::collection::vec((0i64..60 * 24 * 20, arb_modality()), 0..200),
        tz in -12i32..=14,
    ) {
        let user = UserId::new();
        let logs: Vec<FoodLog> = entries
            .iter()
            .map(|(m, md)| log(user, base() + Duration::minutes(*m), *md, 1.0))
            .collect();
        let off = offset(tz);
        let daily = daily_counts(&logs, off);
        let by_mod = modality_timeseries(&logs, off);
        prop_assert_eq!(daily.values().sum::<usize>(), logs.len());
        prop_assert_eq!(daily.len(), by_mod.len());
        for (d, n) in &daily {
            prop_assert_eq!(by_mod[d].total(), *n);
            prop_assert_eq!(day_timeline(&logs, *d, off).len(), *n);
        }
        let mut per_mod: BTreeMap<Modality, usize> = BTreeMap::new();
        for l in &logs {
            *per_mod.entry(l.modality).or_default() += 1;
        }
        for m in Modality::ALL {
            let s: usize = by_mod.values().map(|c| c.get(m)).sum();
            prop_assert_eq!(s, per_mod.get(&m).copied().unwrap_or(0));
        }
    }

    #[test]
    fn rates_stay_in_unit_interval(flags in prop::collection::vec((any::<bool>(), any::<bool>()), 1..100)) {
        let user = UserId::new();
        let logs: Vec<FoodLog> = flags
            .iter()
            .map(|(e, d)| {
                let mut l = log(user, base(), Modality::Text, 1.0);
                l.edited = *e;
                l.deleted = *d;
                l
            })
            .collect();
        let r = edit_delete_rates(&logs);
        let er = r.edit_rate.unwrap();
        let dr = r.delete_rate.unwrap();
        prop_assert!((0.0..=1.0).contains(&er) && (0.0..=1.0).contains(&dr));
        prop_assert_eq!(r.edited, flags.iter().filter(|f| f.0).count());
    }
}

#[test]
fn charts_render_report_data() {
    let user = UserId::new();
    let logs: Vec<FoodLog> = (0..10)
        .map(|i| log(user, base() + Duration::hours(i * 5), Modality::ALL[i as usize % 3], 1.0))
        .collect();
    let daily = daily_counts(&logs, analytics::utc());
    let labels: Vec<String> = daily.keys().map(|d| d.to_string()).collect();
    let values: Vec<f64> = daily.values().map(|&n| n as f64).collect();
    let svg = analytics::bar_chart("Logs per day", &labels, &values);
    assert_eq!(svg.matches(r#"class="bar""#).count(), daily.len());

    let t = day_timeline(&logs, base().date_naive(), analytics::utc());
    let svg = analytics::timeline_chart("Day", &t);
    assert_eq!(svg.matches(r#"class="event""#).count(), t.len());
}
