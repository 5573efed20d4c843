//! Metric reports and their table rendering.

use nutrilog_core::domain::Nutrient;
use serde::{Deserialize, Serialize};

use crate::metrics::{interval_from_resamples, mae, resample_indices, rmse, Interval, MetricError, Metric};
use crate::runner::{ConditionRun, Exclusion};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub nutrient: Nutrient,
    pub condition: String,
    pub mae: f64,
    pub rmse: f64,
    pub mae_ci: Interval,
    pub rmse_ci: Interval,
    pub n: usize,
    pub replicates: usize,
    pub alpha: f64,
    pub seed: u64,
    pub excluded: usize,
}

impl MetricReport {
    /// Whether each point estimate lies inside its own interval. Percentile
    /// intervals need not contain the point for skewed resample distributions.
    pub fn points_within_intervals(&self) -> bool {
        let inside = |p: f64, ci: Interval| ci.lower <= p && p <= ci.upper;
        inside(self.mae, self.mae_ci) && inside(self.rmse, self.rmse_ci)
    }
}

/// Four reports per condition, one per nutrient. All nutrients and both
/// metrics share one set of resample indices drawn from `seed`. A
/// condition with no scored dishes yields no reports.
pub fn condition_reports(
    run: &ConditionRun,
    replicates: usize,
    alpha: f64,
    seed: u64,
) -> Result<Vec<MetricReport>, MetricError> {
    let n = run.n_scored();
    let excluded = run.records.len() - n;
    if n == 0 {
        tracing::warn!(condition = %run.label, "no scored dishes");
        return Ok(Vec::new());
    }
    let resamples = resample_indices(n, replicates, seed);
    let mut out = Vec::with_capacity(Nutrient::ALL.len());
    for nutrient in Nutrient::ALL {
        let (p, t) = run.columns(nutrient);
        let report = MetricReport {
            nutrient,
            condition: run.label.clone(),
            mae: mae(&p, &t)?,
            rmse: rmse(&p, &t)?,
            mae_ci: interval_from_resamples(&p, &t, Metric::Mae, &resamples, alpha)?,
            rmse_ci: interval_from_resamples(&p, &t, Metric::Rmse, &resamples, alpha)?,
            n,
            replicates,
            alpha,
            seed,
            excluded,
        };
        if !report.points_within_intervals() {
            tracing::warn!(condition = %run.label, nutrient = nutrient.key(), "point estimate outside its interval");
        }
        out.push(report);
    }
    Ok(out)
}

pub fn all_reports(
    runs: &[ConditionRun],
    replicates: usize,
    alpha: f64,
    seed: u64,
) -> Result<Vec<MetricReport>, MetricError> {
    let mut out = Vec::new();
    for run in runs {
        out.extend(condition_reports(run, replicates, alpha, seed)?);
    }
    Ok(out)
}

/// `point (lower, upper)` with two decimals.
pub fn format_cell(point: f64, ci: Interval) -> String {
    format!("{point:.2} ({:.2}, {:.2})", ci.lower, ci.upper)
}

fn level_label(alpha: f64) -> String {
    let pct = (1.0 - alpha) * 100.0;
    let s = format!("{pct:.2}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Markdown table with rows grouped by nutrient, then by condition in
/// first-seen order.
pub fn emit_report(reports: &[MetricReport]) -> String {
    let level = reports.first().map_or_else(|| "95".to_string(), |r| level_label(r.alpha));
    let mut out = format!(
        "| Nutritional Value | Model | MAE ({level}% CI) | RMSE ({level}% CI) |\n|---|---|---:|---:|\n"
    );
    let mut conditions: Vec<&str> = Vec::new();
    for r in reports {
        if !conditions.contains(&r.condition.as_str()) {
            conditions.push(&r.condition);
        }
    }
    for nutrient in Nutrient::ALL {
        for cond in &conditions {
            for r in reports.iter().filter(|r| r.nutrient == nutrient && r.condition == *cond) {
                out.push_str(&format!(
                    "| {} | {} | {} | {} |\n",
                    nutrient.display_name(),
                    r.condition,
                    format_cell(r.mae, r.mae_ci),
                    format_cell(r.rmse, r.rmse_ci)
                ));
            }
        }
    }
    out
}

/// Per-condition scored and excluded counts with exclusion reasons.
pub fn emit_exclusions(runs: &[ConditionRun]) -> String {
    let mut out = String::from("| Model | Scored | Excluded |\n|---|---:|---:|\n");
    for run in runs {
        out.push_str(&format!(
            "| {} | {} | {} |\n",
            run.label,
            run.n_scored(),
            run.records.len() - run.n_scored()
        ));
    }
    let all: Vec<(&str, Exclusion)> = runs
        .iter()
        .flat_map(|r| r.exclusions().into_iter().map(move |e| (r.label.as_str(), e)))
        .collect();
    if !all.is_empty() {
        out.push_str("\nExcluded dishes:\n");
        for (label, e) in all {
            out.push_str(&format!("- [{label}] {}: {}\n", e.dish_id, e.reason));
        }
    }
    out
}
