//! `nutrilog analytics`: engagement reports and SVG plots from a store.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{FixedOffset, NaiveDate};
use clap::{Args, Subcommand};
use nutrilog_core::analytics::{
    bar_chart, cohort_split, day_timeline, engagement_report, follow_up_category_distribution, grouped_bar_chart,
    line_chart, timeline_chart, CategoryHistogram, CohortReport, EngagementReport, Series, EXPERIENCED_MONTHS,
};
use nutrilog_core::domain::{FoodLog, LogId, UserProfile};
use nutrilog_core::persistence::{LogQuery, Store};
use serde::Serialize;
use thiserror::Error;

use super::eval::ProviderArgs;
use crate::config::offset_from_minutes;

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Storage(#[from] nutrilog_core::persistence::StorageError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Subcommand)]
pub enum AnalyticsCommand {
    /// Engagement, edit/delete rates, question categories and cohorts as JSON.
    Report(ReportArgs),
    /// The same data as SVG charts.
    Plot(PlotArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SourceArgs {
    /// SQLite store written by the service.
    #[arg(long)]
    pub db: PathBuf,
    /// Local offset used to bucket days.
    #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
    pub tz_offset_minutes: i32,
    /// Classify follow-up questions with the model provider.
    #[arg(long)]
    pub classify: bool,
    #[arg(long, default_value_t = EXPERIENCED_MONTHS)]
    pub threshold_months: u32,
    #[command(flatten)]
    pub provider: ProviderArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// Write JSON here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct PlotArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// Directory for the SVG files.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Day shown in the timeline; defaults to the last day with logs.
    #[arg(long)]
    pub date: Option<NaiveDate>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalyticsReport {
    pub engagement: EngagementReport,
    pub cohorts: CohortReport,
}

struct Loaded {
    users: Vec<UserProfile>,
    logs: Vec<FoodLog>,
    turns: HashMap<LogId, usize>,
    categories: CategoryHistogram,
    offset: FixedOffset,
}

async fn load(args: &SourceArgs) -> Result<Loaded, AnalyticsError> {
    if !args.db.is_file() {
        return Err(AnalyticsError::Invalid(format!("no store at {}", args.db.display())));
    }
    let offset = offset_from_minutes(args.tz_offset_minutes)
        .ok_or_else(|| AnalyticsError::Invalid("--tz-offset-minutes is out of range".into()))?;
    let store = Store::open_migrated(Some(&args.db))?;
    let users = store.list_users()?;
    let logs = store.all_logs(&LogQuery::everything())?;
    let turns: HashMap<LogId, usize> = store.turn_counts()?.into_iter().collect();
    let categories = if args.classify {
        let gateway = args
            .provider
            .gateway()
            .map_err(|e| AnalyticsError::Invalid(e.to_string()))?;
        follow_up_category_distribution(&store.all_questions(None)?, &gateway).await
    } else {
        CategoryHistogram::default()
    };
    Ok(Loaded {
        users,
        logs,
        turns,
        categories,
        offset,
    })
}

fn build(args: &SourceArgs, data: Loaded) -> AnalyticsReport {
    let cohorts = cohort_split(&data.users, &data.logs, &data.turns, args.threshold_months, None, data.offset);
    AnalyticsReport {
        engagement: engagement_report(&data.logs, &data.turns, data.categories, data.offset),
        cohorts,
    }
}

pub async fn report(args: &ReportArgs) -> Result<AnalyticsReport, AnalyticsError> {
    let data = load(&args.source).await?;
    let report = build(&args.source, data);
    let json = serde_json::to_string_pretty(&report)?;
    match &args.out {
        Some(p) => fs::write(p, json).map_err(|source| AnalyticsError::Io { path: p.clone(), source })?,
        None => println!("{json}"),
    }
    Ok(report)
}

fn write(dir: &Path, name: &str, svg: String) -> Result<PathBuf, AnalyticsError> {
    let path = dir.join(name);
    fs::write(&path, svg).map_err(|source| AnalyticsError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

/// Writes the charts and returns their paths.
pub async fn plot(args: &PlotArgs) -> Result<Vec<PathBuf>, AnalyticsError> {
    let data = load(&args.source).await?;
    let logs = data.logs.clone();
    let offset = data.offset;
    let date = args
        .date
        .or_else(|| logs.iter().map(|l| l.logged_at.with_timezone(&offset).date_naive()).max());
    let report = build(&args.source, data);
    fs::create_dir_all(&args.out_dir).map_err(|source| AnalyticsError::Io {
        path: args.out_dir.clone(),
        source,
    })?;
    let days = &report.engagement.days;
    let labels: Vec<String> = days.iter().map(|d| d.date.to_string()).collect();
    let mut out = Vec::new();
    out.push(write(
        &args.out_dir,
        "daily_logs.svg",
        bar_chart("Logs per day", &labels, &days.iter().map(|d| d.logs as f64).collect::<Vec<_>>()),
    )?);
    let by_modality: Vec<Series> = nutrilog_core::domain::Modality::ALL
        .iter()
        .map(|&m| Series::new(m.as_str(), days.iter().map(|d| d.modality.get(m) as f64).collect()))
        .collect();
    out.push(write(
        &args.out_dir,
        "modality.svg",
        grouped_bar_chart("Logs per day by modality", &labels, &by_modality),
    )?);
    out.push(write(
        &args.out_dir,
        "follow_ups.svg",
        line_chart(
            "Follow-up questions per day",
            &labels,
            &[Series::new("follow-ups", days.iter().map(|d| d.follow_ups as f64).collect())],
        ),
    )?);
    let cohorts = [("experienced", &report.cohorts.experienced), ("novice", &report.cohorts.novice)];
    let cohort_labels: Vec<String> = cohorts.iter().map(|(n, _)| n.to_string()).collect();
    let metric = |f: fn(&nutrilog_core::analytics::CohortStats) -> f64| -> Vec<f64> {
        cohorts.iter().map(|(_, c)| c.as_ref().map_or(0.0, f)).collect()
    };
    out.push(write(
        &args.out_dir,
        "cohorts.svg",
        grouped_bar_chart(
            "Mean daily activity per user",
            &cohort_labels,
            &[
                Series::new("logs", metric(|c| c.mean_daily_logs)),
                Series::new("follow-ups", metric(|c| c.mean_daily_follow_ups)),
            ],
        ),
    )?);
    if let Some(date) = date {
        let events = day_timeline(&logs, date, offset);
        out.push(write(
            &args.out_dir,
            "timeline.svg",
            timeline_chart(&format!("Logs on {date}"), &events),
        )?);
    }
    if !report.engagement.categories.is_empty() {
        let shares = &report.engagement.category_shares;
        out.push(write(
            &args.out_dir,
            "categories.svg",
            bar_chart(
                "Follow-up question categories",
                &shares.iter().map(|s| s.label.clone()).collect::<Vec<_>>(),
                &shares.iter().map(|s| s.count as f64).collect::<Vec<_>>(),
            ),
        )?);
    }
    Ok(out)
}

pub async fn dispatch(cmd: &AnalyticsCommand) -> Result<(), AnalyticsError> {
    match cmd {
        AnalyticsCommand::Report(a) => report(a).await.map(|_| ()),
        AnalyticsCommand::Plot(a) => {
            for p in plot(a).await? {
                eprintln!("wrote {}", p.display());
            }
            Ok(())
        }
    }
}
