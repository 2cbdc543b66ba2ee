use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::rmse_values;
use crate::error::{Error, Result};
use crate::grid::Grid;

/// What "number of hotspots" counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HotspotCount {
    /// Hot pixels.
    #[default]
    Pixels,
    /// 4-connected groups of hot pixels.
    Components,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeriveOptions {
    /// Excess temperature a pixel must exceed to be hot, °C.
    pub threshold: f64,
    /// Ground size of one pixel, m.
    pub pixel_size: f64,
    pub count: HotspotCount,
}

impl Default for DeriveOptions {
    fn default() -> Self {
        DeriveOptions {
            threshold: 10.0,
            pixel_size: 90.0,
            count: HotspotCount::Pixels,
        }
    }
}

/// Monitoring quantities of one scene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedPoint {
    pub date: NaiveDate,
    pub max_excess_temp: f64,
    pub hotspot_count: usize,
    /// Distance of the furthest hot pixel from the summit pixel, m.
    pub max_hotspot_distance: f64,
}

fn component_count(hot: &[bool], h: usize, w: usize) -> usize {
    let mut seen = vec![false; hot.len()];
    let mut count = 0;
    let mut stack = Vec::new();
    for start in 0..hot.len() {
        if !hot[start] || seen[start] {
            continue;
        }
        count += 1;
        seen[start] = true;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (r, c) = (i / w, i % w);
            let mut visit = |j: usize| {
                if hot[j] && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            if r > 0 {
                visit(i - w);
            }
            if r + 1 < h {
                visit(i + w);
            }
            if c > 0 {
                visit(i - 1);
            }
            if c + 1 < w {
                visit(i + 1);
            }
        }
    }
    count
}

/// Maximum excess temperature, hotspot count and furthest hotspot distance
/// from the summit pixel at `(H/2, W/2)` (integer division).
pub fn derive_point(date: NaiveDate, grid: &Grid, opts: &DeriveOptions) -> DerivedPoint {
    let (h, w) = grid.dims();
    let (sr, sc) = ((h / 2) as f64, (w / 2) as f64);
    let mut max = f64::NEG_INFINITY;
    let mut hot = vec![false; h * w];
    let mut far2: f64 = 0.0;
    for (i, &v) in grid.data().iter().enumerate() {
        max = max.max(v);
        if v > opts.threshold {
            hot[i] = true;
            let dr = (i / w) as f64 - sr;
            let dc = (i % w) as f64 - sc;
            far2 = far2.max(dr * dr + dc * dc);
        }
    }
    let hotspot_count = match opts.count {
        HotspotCount::Pixels => hot.iter().filter(|&&x| x).count(),
        HotspotCount::Components => component_count(&hot, h, w),
    };
    DerivedPoint {
        date,
        max_excess_temp: max,
        hotspot_count,
        max_hotspot_distance: far2.sqrt() * opts.pixel_size,
    }
}

pub fn derive_series<'a>(
    scenes: impl IntoIterator<Item = (NaiveDate, &'a Grid)>,
    opts: &DeriveOptions,
) -> Vec<DerivedPoint> {
    scenes
        .into_iter()
        .map(|(d, g)| derive_point(d, g, opts))
        .collect()
}

/// RMSE of each derived quantity between paired series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedRmse {
    pub max_excess_temp: f64,
    pub hotspot_count: f64,
    pub max_hotspot_distance: f64,
}

pub fn derived_rmse(pred: &[DerivedPoint], obs: &[DerivedPoint]) -> Result<DerivedRmse> {
    if pred.is_empty() || pred.len() != obs.len() {
        return Err(Error::InvalidArgument(format!(
            "derived series lengths {} and {} cannot be compared",
            pred.len(),
            obs.len()
        )));
    }
    let col = |s: &[DerivedPoint], f: fn(&DerivedPoint) -> f64| s.iter().map(f).collect::<Vec<_>>();
    let m = |f: fn(&DerivedPoint) -> f64| rmse_values(&col(pred, f), &col(obs, f));
    Ok(DerivedRmse {
        max_excess_temp: m(|p| p.max_excess_temp),
        hotspot_count: m(|p| p.hotspot_count as f64),
        max_hotspot_distance: m(|p| p.max_hotspot_distance),
    })
}
