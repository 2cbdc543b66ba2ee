use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::nearest::nearest_valid;
use super::Scene;
use crate::dataset::gap_days;
use crate::error::{Error, Result};
use crate::grid::Grid;

/// Per-scene fill counts from [`carry_forward_fill`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CarryCounts {
    /// Pixels taken from an earlier scene.
    pub carried: usize,
    /// First scene only: pixels filled from their nearest observed
    /// neighbour.
    pub interpolated: usize,
    /// Pixels with no observation at or before this scene, set to 0.
    pub never_observed: usize,
}

/// Background-subtracted scene with missing pixels, ready for filling.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialScene {
    pub date: NaiveDate,
    pub grid: Grid,
    pub background: f64,
}

/// Fills missing pixels with the most recent value observed at that pixel
/// and records the staleness in days.
///
/// The first scene's gaps are filled from the nearest observed pixel of the
/// same scene with age 0. A pixel with no value to carry is set to 0 with
/// age 0 and counted as never observed.
pub fn carry_forward_fill(scenes: &[PartialScene]) -> Result<(Vec<Scene>, Vec<CarryCounts>)> {
    for w in scenes.windows(2) {
        if w[1].date <= w[0].date {
            return Err(Error::Data(format!(
                "scene dates must be strictly increasing ({} then {})",
                w[0].date, w[1].date
            )));
        }
        if w[1].grid.dims() != w[0].grid.dims() {
            return Err(Error::Data("scene sizes differ within a volcano".into()));
        }
    }
    let mut out = Vec::with_capacity(scenes.len());
    let mut counts = Vec::with_capacity(scenes.len());
    // Per pixel: last value and the date it was observed.
    let mut last: Vec<Option<(f64, NaiveDate)>> = Vec::new();
    for (k, s) in scenes.iter().enumerate() {
        let (h, w) = s.grid.dims();
        let mut grid = s.grid.clone();
        let mut age = Grid::zeros(h, w);
        let mut cnt = CarryCounts::default();
        if k == 0 {
            last = vec![None; h * w];
            let source = s.grid.clone();
            for r in 0..h {
                for c in 0..w {
                    let i = r * w + c;
                    if !source.is_missing(r, c) {
                        last[i] = Some((source.get(r, c), s.date));
                    } else if let Some((nr, nc)) = nearest_valid(&source, r, c) {
                        let v = source.get(nr, nc);
                        grid.set(r, c, v);
                        last[i] = Some((v, s.date));
                        cnt.interpolated += 1;
                    } else {
                        grid.set(r, c, 0.0);
                        cnt.never_observed += 1;
                    }
                }
            }
        } else {
            for r in 0..h {
                for c in 0..w {
                    let i = r * w + c;
                    if !s.grid.is_missing(r, c) {
                        last[i] = Some((s.grid.get(r, c), s.date));
                        continue;
                    }
                    match last[i] {
                        Some((v, d)) => {
                            grid.set(r, c, v);
                            age.set(r, c, gap_days(d, s.date));
                            cnt.carried += 1;
                        }
                        None => {
                            grid.set(r, c, 0.0);
                            cnt.never_observed += 1;
                        }
                    }
                }
            }
        }
        out.push(Scene {
            date: s.date,
            grid,
            fill_age: age,
            background: s.background,
        });
        counts.push(cnt);
    }
    Ok((out, counts))
}
