//! Workload forecasting: per-template arrival series bucketing and a linear
//! AR(4) forecaster for just-in-time tuning.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ir::{QueryId, TemplateId, Workload};

/// Autoregression order of the forecaster.
pub const AR_ORDER: usize = 4;

/// Minimum number of observed buckets required to fit the forecaster.
pub const MIN_HISTORY: usize = 8;

/// Default bucket width for arrival timestamps, in seconds.
pub const DEFAULT_BUCKET_SECONDS: u64 = 3600;

/// Contiguous, bucketed arrival counts of one query template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalSeries {
    pub template_id: TemplateId,
    /// Start timestamp of the first bucket, in seconds.
    pub start: u64,
    /// Bucket width in seconds.
    pub bucket_seconds: u64,
    /// One count per contiguous bucket.
    pub counts: Vec<f64>,
}

/// Buckets per-query arrival timestamps into contiguous per-template series.
/// Queries without timestamps are ignored.
pub fn bucketize(
    w: &Workload,
    arrivals: &BTreeMap<QueryId, u64>,
    bucket_seconds: u64,
) -> Vec<ArrivalSeries> {
    let mut per_template: BTreeMap<TemplateId, Vec<u64>> = BTreeMap::new();
    for q in &w.queries {
        if let Some(ts) = arrivals.get(&q.id) {
            per_template
                .entry(q.template_id.clone())
                .or_default()
                .push(*ts);
        }
    }
    let mut out = Vec::new();
    for (template_id, mut stamps) in per_template {
        stamps.sort_unstable();
        let first = stamps[0] / bucket_seconds;
        let last = *stamps.last().unwrap() / bucket_seconds;
        let mut counts = vec![0.0; (last - first + 1) as usize];
        for ts in stamps {
            counts[(ts / bucket_seconds - first) as usize] += 1.0;
        }
        out.push(ArrivalSeries {
            template_id,
            start: first * bucket_seconds,
            bucket_seconds,
            counts,
        });
    }
    out
}

/// Forecasts the next `horizon` bucket counts with an order-4 linear
/// autoregression fit by least squares; predictions are clamped to >= 0.
/// Deterministic. Requires at least [`MIN_HISTORY`] observed buckets.
pub fn forecast_arrivals(series: &ArrivalSeries, horizon: usize) -> Result<Vec<f64>> {
    let y = &series.counts;
    if y.len() < MIN_HISTORY {
        return Err(Error::InsufficientData(format!(
            "forecasting needs at least {MIN_HISTORY} buckets, got {}",
            y.len()
        )));
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / y.len() as f64;
    if var < 1e-18 {
        // Constant (possibly all-zero) series: the AR fixed point is the mean.
        return Ok(vec![mean.max(0.0); horizon]);
    }

    // Design matrix rows: [1, y[t-1], ..., y[t-4]] -> y[t].
    let p = AR_ORDER;
    let d = p + 1;
    let mut xtx = vec![vec![0.0; d]; d];
    let mut xty = vec![0.0; d];
    for t in p..y.len() {
        let mut row = vec![1.0];
        for lag in 1..=p {
            row.push(y[t - lag]);
        }
        for i in 0..d {
            for j in 0..d {
                xtx[i][j] += row[i] * row[j];
            }
            xty[i] += row[i] * y[t];
        }
    }
    // Tiny ridge keeps the solve deterministic on degenerate designs.
    let scale = (0..d).map(|i| xtx[i][i]).fold(0.0_f64, f64::max).max(1.0);
    for (i, row) in xtx.iter_mut().enumerate() {
        row[i] += 1e-12 * scale;
        let _ = i;
    }
    let beta = solve_symmetric(xtx, xty)?;

    let mut window: Vec<f64> = y[y.len() - p..].to_vec();
    let mut preds = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let mut next = beta[0];
        for lag in 1..=p {
            next += beta[lag] * window[window.len() - lag];
        }
        let next = next.max(0.0);
        preds.push(next);
        window.push(next);
    }
    Ok(preds)
}

/// Gaussian elimination with partial pivoting for small symmetric systems.
fn solve_symmetric(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let mut pivot = col;
        for row in col + 1..n {
            if a[row][col].abs() > a[pivot][col].abs() {
                pivot = row;
            }
        }
        if a[pivot][col].abs() < 1e-300 {
            return Err(Error::InsufficientData(
                "singular autoregression system".into(),
            ));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut sum = b[col];
        for k in col + 1..n {
            sum -= a[col][k] * x[k];
        }
        x[col] = sum / a[col][col];
    }
    Ok(x)
}

/// Mean absolute percentage error against a held-out continuation; buckets
/// with zero actual count are skipped.
pub fn mape(actual: &[f64], predicted: &[f64]) -> f64 {
    let mut total = 0.0;
    let mut n = 0usize;
    for (a, p) in actual.iter().zip(predicted.iter()) {
        if *a != 0.0 {
            total += ((a - p) / a).abs();
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        total / n as f64
    }
}
