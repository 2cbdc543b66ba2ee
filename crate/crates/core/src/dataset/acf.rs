use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest lag examined when choosing a window length.
pub const MAX_LAG: usize = 10;
/// Accepted window lengths.
pub const MIN_WINDOW: usize = 3;
pub const MAX_WINDOW: usize = 10;
/// Shortest series a window length can be chosen from.
pub const MIN_SERIES: usize = 12;

/// Sample autocorrelations `r_1..=r_max_lag`.
pub fn acf(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    if series.len() <= max_lag {
        return Err(Error::InvalidArgument(format!(
            "autocorrelation up to lag {max_lag} needs more than {max_lag} points, got {}",
            series.len()
        )));
    }
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n as f64;
    let dev: Vec<f64> = series.iter().map(|x| x - mean).collect();
    let denom: f64 = dev.iter().map(|d| d * d).sum();
    if denom == 0.0 || !denom.is_finite() {
        return Err(Error::Data(
            "autocorrelation of a constant series is undefined".into(),
        ));
    }
    Ok((1..=max_lag)
        .map(|k| (0..n - k).map(|t| dev[t] * dev[t + k]).sum::<f64>() / denom)
        .collect())
}

/// Large-sample white-noise bound: `|r_k|` above it counts as significant.
pub fn significance_bound(n: usize) -> f64 {
    1.96 / (n as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSelection {
    pub autocorrelations: Vec<f64>,
    pub bound: f64,
    pub largest_significant_lag: Option<usize>,
    /// The lag clamped to the accepted range (the minimum if none).
    pub window: usize,
}

/// Window length from the largest significant autocorrelation lag of a
/// maximum-temperature series, clamped to `[3, 10]`.
pub fn select_window_length(series: &[f64]) -> Result<WindowSelection> {
    if series.len() < MIN_SERIES {
        return Err(Error::Data(format!(
            "window selection needs at least {MIN_SERIES} scenes, got {}",
            series.len()
        )));
    }
    let max_lag = MAX_LAG.min(series.len() - 1);
    let r = acf(series, max_lag)?;
    let bound = significance_bound(series.len());
    let lag = (1..=max_lag).rev().find(|&k| r[k - 1].abs() > bound);
    let window = lag.unwrap_or(MIN_WINDOW).clamp(MIN_WINDOW, MAX_WINDOW);
    Ok(WindowSelection {
        autocorrelations: r,
        bound,
        largest_significant_lag: lag,
        window,
    })
}

/// Rounded mean of per-volcano window lengths.
pub fn pooled_window_length(windows: &[usize]) -> Result<usize> {
    if windows.is_empty() {
        return Err(Error::Data(
            "no volcano has a long enough series to choose a window".into(),
        ));
    }
    let mean = windows.iter().sum::<usize>() as f64 / windows.len() as f64;
    Ok(mean.round() as usize)
}
