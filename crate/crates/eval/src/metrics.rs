//! Error metrics and percentile-bootstrap confidence intervals.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default number of bootstrap replicates.
pub const DEFAULT_REPLICATES: usize = 1000;
/// Default significance level, for 95% intervals.
pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("prediction and truth lengths differ ({preds} vs {truths})")]
    LengthMismatch { preds: usize, truths: usize },
    #[error("no pairs to score")]
    Empty,
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("replicate count must be at least 1")]
    InvalidReplicates,
    #[error("alpha must be in (0, 1], got {0}")]
    InvalidAlpha(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Mae,
    Rmse,
}

impl Metric {
    pub const ALL: [Metric; 2] = [Metric::Mae, Metric::Rmse];

    pub fn compute(self, preds: &[f64], truths: &[f64]) -> Result<f64, MetricError> {
        match self {
            Metric::Mae => mae(preds, truths),
            Metric::Rmse => rmse(preds, truths),
        }
    }
}

fn check(preds: &[f64], truths: &[f64]) -> Result<(), MetricError> {
    if preds.len() != truths.len() {
        return Err(MetricError::LengthMismatch {
            preds: preds.len(),
            truths: truths.len(),
        });
    }
    if preds.is_empty() {
        return Err(MetricError::Empty);
    }
    for (i, (p, t)) in preds.iter().zip(truths).enumerate() {
        if !p.is_finite() || !t.is_finite() {
            return Err(MetricError::NonFinite(i));
        }
    }
    Ok(())
}

/// Mean absolute error.
pub fn mae(preds: &[f64], truths: &[f64]) -> Result<f64, MetricError> {
    check(preds, truths)?;
    let sum: f64 = preds.iter().zip(truths).map(|(p, t)| (p - t).abs()).sum();
    Ok(sum / preds.len() as f64)
}

/// Root mean squared error.
pub fn rmse(preds: &[f64], truths: &[f64]) -> Result<f64, MetricError> {
    check(preds, truths)?;
    let sum: f64 = preds.iter().zip(truths).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((sum / preds.len() as f64).sqrt())
}

/// Percentile `p` in `[0, 100]` of ascending `sorted` by linear
/// interpolation between the two nearest ranks, rank = p/100 * (len - 1).
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty sample");
    let rank = (p / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    }
}

/// Lower and upper percentile levels for significance `alpha`.
pub fn percentile_bounds(alpha: f64) -> (f64, f64) {
    (alpha / 2.0 * 100.0, (1.0 - alpha / 2.0) * 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

/// Draws `replicates` index resamples of size `n` with replacement.
///
/// Every replicate is drawn from one generator seeded with `seed`, so all
/// metrics computed over the same resamples see identical indices.
pub fn resample_indices(n: usize, replicates: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..replicates)
        .map(|_| (0..n).map(|_| rng.gen_range(0..n)).collect())
        .collect()
}

fn validate_params(replicates: usize, alpha: f64) -> Result<(), MetricError> {
    if replicates == 0 {
        return Err(MetricError::InvalidReplicates);
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(MetricError::InvalidAlpha(alpha));
    }
    Ok(())
}

/// Interval from precomputed resample indices.
pub fn interval_from_resamples(
    preds: &[f64],
    truths: &[f64],
    metric: Metric,
    resamples: &[Vec<usize>],
    alpha: f64,
) -> Result<Interval, MetricError> {
    check(preds, truths)?;
    validate_params(resamples.len(), alpha)?;
    let mut estimates = Vec::with_capacity(resamples.len());
    let mut p = Vec::with_capacity(preds.len());
    let mut t = Vec::with_capacity(preds.len());
    for idx in resamples {
        p.clear();
        t.clear();
        for &i in idx {
            p.push(preds[i]);
            t.push(truths[i]);
        }
        estimates.push(metric.compute(&p, &t)?);
    }
    estimates.sort_by(f64::total_cmp);
    let (p1, p2) = percentile_bounds(alpha);
    Ok(Interval {
        lower: percentile(&estimates, p1),
        upper: percentile(&estimates, p2),
    })
}

/// Percentile bootstrap interval of `metric` over `(pred, truth)` pairs.
pub fn bootstrap_ci(
    pairs: &[(f64, f64)],
    metric: Metric,
    replicates: usize,
    alpha: f64,
    seed: u64,
) -> Result<Interval, MetricError> {
    validate_params(replicates, alpha)?;
    if pairs.is_empty() {
        return Err(MetricError::Empty);
    }
    let (preds, truths): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    let resamples = resample_indices(pairs.len(), replicates, seed);
    interval_from_resamples(&preds, &truths, metric, &resamples, alpha)
}
