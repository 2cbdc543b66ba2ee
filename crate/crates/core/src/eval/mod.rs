//! Scoring and monitoring-oriented post-processing of forecasts.
//!
//! Everything here works in unscaled °C of excess temperature.

mod derived;
mod histogram;
mod perturb;

pub use derived::{
    derive_point, derive_series, derived_rmse, DeriveOptions, DerivedPoint, DerivedRmse,
    HotspotCount,
};
pub use histogram::{cumulative_histogram, histogram_match, match_values, CumulativeHistogram};
pub use perturb::{perturb_time_experiment, perturbation_labels, PerturbationResult, Position};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Root mean squared error pooled over every pixel of every scene.
pub fn rmse(preds: &[Grid], targets: &[Grid]) -> Result<f64> {
    if preds.is_empty() {
        return Err(Error::InvalidArgument("rmse of an empty scene list".into()));
    }
    if preds.len() != targets.len() {
        return Err(Error::InvalidArgument(format!(
            "{} forecasts for {} targets",
            preds.len(),
            targets.len()
        )));
    }
    let mut sse = 0.0;
    let mut count = 0usize;
    for (p, t) in preds.iter().zip(targets) {
        if p.dims() != t.dims() {
            let (a, b) = (p.dims(), t.dims());
            return Err(Error::ShapeMismatch {
                op: "rmse",
                left: vec![a.0, a.1],
                right: vec![b.0, b.1],
            });
        }
        sse += p
            .data()
            .iter()
            .zip(t.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
        count += p.len();
    }
    Ok((sse / count as f64).sqrt())
}

/// RMSE of two equal-length value lists.
pub(crate) fn rmse_values(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let sse: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (sse / a.len() as f64).sqrt()
}
