use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Mean 0-based rank of every value; tied values share their average rank.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let mean = (i + j) as f64 / 2.0;
        for &k in &order[i..=j] {
            ranks[k] = mean;
        }
        i = j + 1;
    }
    ranks
}

/// Reference value at quantile `q` in `[0, 1]` of the sorted reference,
/// interpolating linearly between order statistics.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// Replaces each value by the reference value at its empirical quantile.
///
/// A value of rank `r` among `N` sits at quantile `r / (N - 1)`; a single
/// value sits at the median.
pub fn match_values(values: &[f64], reference: &[f64]) -> Result<Vec<f64>> {
    if reference.is_empty() {
        return Err(Error::InvalidArgument(
            "histogram matching needs a non-empty reference".into(),
        ));
    }
    if reference.iter().chain(values).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("histogram matching input".into()));
    }
    let mut sorted = reference.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = values.len();
    let ranks = average_ranks(values);
    Ok(ranks
        .into_iter()
        .map(|r| {
            let q = if n == 1 { 0.5 } else { r / (n - 1) as f64 };
            quantile(&sorted, q)
        })
        .collect())
}

/// Histogram-matches one scene onto a reference pixel population.
pub fn histogram_match(pred: &Grid, reference: &[f64]) -> Result<Grid> {
    let matched = match_values(pred.data(), reference)?;
    Grid::new(pred.height(), pred.width(), matched)
}

/// Cumulative pixel counts at evenly spaced upper bin edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CumulativeHistogram {
    /// Upper edge of each bin.
    pub edges: Vec<f64>,
    /// Values at or below each edge.
    pub counts: Vec<usize>,
    pub max: f64,
}

/// Cumulative histogram over `n_bins` equal-width bins spanning the
/// population's range.
pub fn cumulative_histogram(values: &[f64], n_bins: usize) -> Result<CumulativeHistogram> {
    if values.is_empty() || n_bins == 0 {
        return Err(Error::InvalidArgument(
            "cumulative histogram needs values and at least one bin".into(),
        ));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    let width = (hi - lo) / n_bins as f64;
    let mut edges: Vec<f64> = (1..=n_bins).map(|k| lo + width * k as f64).collect();
    // Pin the final edge so rounding never leaves the maximum uncounted.
    edges[n_bins - 1] = hi;
    let counts = edges
        .iter()
        .map(|&e| sorted.partition_point(|&v| v <= e))
        .collect();
    Ok(CumulativeHistogram {
        edges,
        counts,
        max: hi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn self_match_is_identity() {
        let v: Vec<f64> = (0..200)
            .map(|i| ((i * 37) % 101) as f64 * 0.7 - 3.0)
            .collect();
        let m = match_values(&v, &v).unwrap();
        for (a, b) in m.iter().zip(&v) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn endpoints_take_reference_extremes() {
        let pred = Grid::from_fn(4, 4, |r, c| (r * 4 + c) as f64);
        let reference = [3.0, -1.0, 8.0, 2.5];
        let m = histogram_match(&pred, &reference).unwrap();
        assert_eq!(m.get(0, 0), -1.0);
        assert_eq!(m.get(3, 3), 8.0);
        assert!(histogram_match(&pred, &[]).is_err());
    }

    #[test]
    fn ties_share_a_value_and_single_value_sits_at_median() {
        let m = match_values(&[1.0, 1.0, 5.0], &[0.0, 10.0, 20.0]).unwrap();
        assert_eq!(m[0], m[1]);
        assert_eq!(m[0], 5.0);
        assert_eq!(match_values(&[42.0], &[0.0, 1.0, 2.0]).unwrap(), vec![1.0]);
    }

    #[test]
    fn transfers_distribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let src = Normal::new(0.0, 1.0).unwrap();
        let dst = Normal::new(5.0, 2.0).unwrap();
        let x: Vec<f64> = (0..10_000).map(|_| src.sample(&mut rng)).collect();
        let r: Vec<f64> = (0..10_000).map(|_| dst.sample(&mut rng)).collect();
        let m = match_values(&x, &r).unwrap();
        let mean = m.iter().sum::<f64>() / m.len() as f64;
        let sd = (m.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m.len() as f64).sqrt();
        assert!((mean - 5.0).abs() < 0.5);
        assert!((sd - 2.0).abs() < 0.2);
    }

    #[test]
    fn ranking_is_preserved() {
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let n = Normal::new(0.0, 3.0).unwrap();
        let x: Vec<f64> = (0..500).map(|_| n.sample(&mut rng)).collect();
        let r: Vec<f64> = (0..80).map(|_| n.sample(&mut rng).exp()).collect();
        let m = match_values(&x, &r).unwrap();
        for i in 0..x.len() {
            for j in 0..x.len() {
                if x[i] < x[j] {
                    assert!(m[i] <= m[j]);
                }
            }
        }
    }

    #[test]
    fn cumulative_counts_match_sort_and_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let n = Normal::new(10.0, 4.0).unwrap();
        let x: Vec<f64> = (0..1000).map(|_| n.sample(&mut rng)).collect();
        let h = cumulative_histogram(&x, 25).unwrap();
        assert!(h.counts.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(*h.counts.last().unwrap(), 1000);
        for (e, &c) in h.edges.iter().zip(&h.counts) {
            assert_eq!(c, x.iter().filter(|&&v| v <= *e).count());
        }
        assert_eq!(h.max, x.iter().copied().fold(f64::MIN, f64::max));
    }

    #[test]
    fn single_value_population_is_a_step() {
        let h = cumulative_histogram(&[4.0; 7], 5).unwrap();
        assert!(h.counts.iter().all(|&c| c == 7));
        assert_eq!(h.max, 4.0);
    }
}
