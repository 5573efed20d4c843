use nutrilog_eval::metrics::{
    bootstrap_ci, mae, percentile_bounds, resample_indices, rmse, Metric,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Straight from the definitions, with no shared helpers.
fn oracle_mae(p: &[f64], t: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..p.len() {
        s += (p[i] - t[i]).abs();
    }
    s / p.len() as f64
}

fn oracle_rmse(p: &[f64], t: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..p.len() {
        let d = p[i] - t[i];
        s += d * d;
    }
    (s / p.len() as f64).sqrt()
}

/// Independent percentile: position p/100*(B-1) between order statistics.
fn oracle_percentile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pos = p / 100.0 * (v.len() as f64 - 1.0);
    let below = pos.floor();
    let w = pos - below;
    let i = below as usize;
    if i + 1 < v.len() {
        v[i] * (1.0 - w) + v[i + 1] * w
    } else {
        v[i]
    }
}

/// Naive resampling loop drawing from the same generator stream.
fn oracle_bootstrap(pairs: &[(f64, f64)], metric: Metric, b: usize, alpha: f64, seed: u64) -> (f64, f64) {
    let n = pairs.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = Vec::new();
    for _ in 0..b {
        let mut p = Vec::new();
        let mut t = Vec::new();
        for _ in 0..n {
            let j = rng.gen_range(0..n);
            p.push(pairs[j].0);
            t.push(pairs[j].1);
        }
        stats.push(match metric {
            Metric::Mae => oracle_mae(&p, &t),
            Metric::Rmse => oracle_rmse(&p, &t),
        });
    }
    let lo = alpha / 2.0 * 100.0;
    let hi = (1.0 - alpha / 2.0) * 100.0;
    (oracle_percentile(&stats, lo), oracle_percentile(&stats, hi))
}

#[test]
fn metrics_agree_with_oracle_on_random_vectors() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..1000 {
        let n = rng.gen_range(1..=500);
        let p: Vec<f64> = (0..n).map(|_| rng.gen_range(-1000.0..1000.0)).collect();
        let t: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1000.0)).collect();
        let m = mae(&p, &t).unwrap();
        let r = rmse(&p, &t).unwrap();
        assert!((m - oracle_mae(&p, &t)).abs() <= 1e-9);
        assert!((r - oracle_rmse(&p, &t)).abs() <= 1e-9);
        assert!(m <= r + 1e-12);
    }
}

#[test]
fn bootstrap_matches_naive_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let pairs: Vec<(f64, f64)> = (0..200)
        .map(|_| {
            let t = rng.gen_range(0.0..600.0);
            (t + rng.gen_range(-80.0..80.0), t)
        })
        .collect();
    for metric in Metric::ALL {
        let ci = bootstrap_ci(&pairs, metric, 1000, 0.05, 31).unwrap();
        let (lo, hi) = oracle_bootstrap(&pairs, metric, 1000, 0.05, 31);
        assert!((ci.lower - lo).abs() <= 1e-9, "{metric:?} {} vs {lo}", ci.lower);
        assert!((ci.upper - hi).abs() <= 1e-9);
        assert!(ci.lower <= ci.upper);
    }
}

#[test]
fn alpha_one_gives_median() {
    let pairs: Vec<(f64, f64)> = (0..30).map(|i| (i as f64, (i * i) as f64 / 10.0)).collect();
    let ci = bootstrap_ci(&pairs, Metric::Mae, 101, 1.0, 5).unwrap();
    assert_eq!(ci.lower, ci.upper);
    let (lo, _) = oracle_bootstrap(&pairs, Metric::Mae, 101, 1.0, 5);
    assert!((ci.lower - lo).abs() <= 1e-9);
    assert_eq!(percentile_bounds(1.0), (50.0, 50.0));
}

#[test]
fn seeds_reproduce() {
    let pairs: Vec<(f64, f64)> = (0..64).map(|i| (i as f64 * 0.7, 20.0)).collect();
    let a = bootstrap_ci(&pairs, Metric::Rmse, 500, 0.05, 8).unwrap();
    let b = bootstrap_ci(&pairs, Metric::Rmse, 500, 0.05, 8).unwrap();
    assert_eq!(a, b);
    assert_eq!(resample_indices(10, 3, 1), resample_indices(10, 3, 1));
}

proptest! {
    #[test]
    fn mae_never_exceeds_rmse(v in prop::collection::vec((-1e4f64..1e4, -1e4f64..1e4), 1..200)) {
        let (p, t): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
        let m = mae(&p, &t).unwrap();
        let r = rmse(&p, &t).unwrap();
        prop_assert!(m <= r * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn equal_errors_make_metrics_equal(e in 0.0f64..100.0, n in 1usize..50) {
        let t: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let p: Vec<f64> = t.iter().enumerate().map(|(i, x)| if i % 2 == 0 { x + e } else { x - e }).collect();
        let m = mae(&p, &t).unwrap();
        let r = rmse(&p, &t).unwrap();
        prop_assert!((m - r).abs() <= 1e-9 * (1.0 + e));
    }

    #[test]
    fn intervals_are_ordered(
        v in prop::collection::vec((0f64..500.0, 0f64..500.0), 1..60),
        b in 1usize..80,
        alpha in 0.001f64..1.0,
        seed in any::<u64>(),
    ) {
        for metric in Metric::ALL {
            let ci = bootstrap_ci(&v, metric, b, alpha, seed).unwrap();
            prop_assert!(ci.lower <= ci.upper);
        }
    }
}
