//! Raw raster to model-ready scene preprocessing.
//!
//! Stages run in a fixed order: recovery-pixel fill, background estimation
//! and subtraction, carry-forward fill with age tracking, and min-max
//! scaling. Scaling is fit on the training split, so it is applied when the
//! dataset is assembled rather than here.

mod background;
mod carry;
mod io;
mod nearest;
mod recovery;
mod scale;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

pub use background::{
    estimate_background, perimeter_windows, subtract_background, BackgroundEstimate,
    BackgroundMethod,
};
pub use carry::{carry_forward_fill, CarryCounts, PartialScene};
pub use io::{
    find_manifests, read_json, read_raster, write_json, write_raster, Manifest, ManifestEntry,
    RawScene, SceneLabel,
};
pub use recovery::fill_recovery_pixels;
pub use scale::ScalerParams;

/// A preprocessed scene: excess temperature over the estimated background,
/// plus how stale each pixel is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub date: NaiveDate,
    pub grid: Grid,
    /// Days since each pixel was genuinely observed (0 = fresh).
    pub fill_age: Grid,
    /// Background temperature that was subtracted, in °C.
    pub background: f64,
}

impl Scene {
    /// A fresh scene with no fill and zero background.
    pub fn observed(date: NaiveDate, grid: Grid) -> Self {
        let fill_age = Grid::zeros(grid.height(), grid.width());
        Scene {
            date,
            grid,
            fill_age,
            background: 0.0,
        }
    }
}

/// What happened to one raw scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneReport {
    pub date: NaiveDate,
    pub missing_raw: usize,
    pub recovery_filled: usize,
    /// `None` when the scene was excluded.
    pub background: Option<BackgroundEstimate>,
    #[serde(flatten)]
    pub fill: CarryCounts,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub excluded: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub volcano_id: String,
    pub scenes: Vec<SceneReport>,
    pub excluded: usize,
    pub never_observed_pixels: usize,
}

/// Runs recovery fill, background subtraction and carry-forward fill over
/// one volcano's chronologically ordered rasters.
///
/// Scenes with no usable background region are dropped and recorded in the
/// report.
pub fn preprocess_volcano(
    volcano_id: &str,
    raw: &[RawScene],
) -> Result<(Vec<Scene>, PipelineReport)> {
    let mut partial = Vec::with_capacity(raw.len());
    let mut reports = Vec::with_capacity(raw.len());
    let mut kept_report = Vec::new();
    for (k, r) in raw.iter().enumerate() {
        if k > 0 && r.date <= raw[k - 1].date {
            return Err(Error::Data(format!(
                "{volcano_id}: scene dates not strictly increasing at {}",
                r.date
            )));
        }
        let (filled, recovered) = fill_recovery_pixels(&r.grid);
        let mut report = SceneReport {
            date: r.date,
            missing_raw: r.grid.missing_count(),
            recovery_filled: recovered,
            background: None,
            fill: CarryCounts::default(),
            excluded: None,
        };
        match estimate_background(&filled) {
            Ok(bg) => {
                partial.push(PartialScene {
                    date: r.date,
                    grid: subtract_background(&filled, bg.value),
                    background: bg.value,
                });
                report.background = Some(bg);
                kept_report.push(reports.len());
            }
            Err(Error::UnusableScene(why)) => {
                log::warn!("{volcano_id} {}: excluded, {why}", r.date);
                report.excluded = Some(why);
            }
            Err(e) => return Err(e),
        }
        reports.push(report);
    }
    let (scenes, counts) = carry_forward_fill(&partial)?;
    let mut never = 0;
    for (idx, c) in kept_report.into_iter().zip(counts) {
        never += c.never_observed;
        reports[idx].fill = c;
    }
    if never > 0 {
        log::warn!("{volcano_id}: {never} pixel values never observed, set to 0");
    }
    let report = PipelineReport {
        volcano_id: volcano_id.to_string(),
        excluded: reports.iter().filter(|r| r.excluded.is_some()).count(),
        scenes: reports,
        never_observed_pixels: never,
    };
    Ok((scenes, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(day: u32, grid: Grid) -> RawScene {
        RawScene {
            volcano_id: "v".into(),
            date: NaiveDate::from_ymd_opt(2005, 1, day).unwrap(),
            grid,
        }
    }

    #[test]
    fn stages_compose_and_output_is_finite() {
        let mut a = Grid::from_fn(24, 24, |r, c| {
            280.0 + if (r, c) == (12, 12) { 40.0 } else { 0.0 }
        });
        a.set(12, 13, f64::NAN);
        let mut b = Grid::filled(24, 24, 285.0);
        for r in 0..5 {
            for c in 14..24 {
                b.set(r, c, f64::NAN);
            }
        }
        let (scenes, report) = preprocess_volcano("v", &[raw(1, a), raw(11, b)]).unwrap();
        assert_eq!(report.scenes[0].recovery_filled, 1);
        assert_eq!(scenes[0].background, 280.0);
        assert_eq!(scenes[0].grid.get(12, 13), 0.0);
        assert_eq!(scenes[0].grid.get(12, 12), 40.0);
        // Top-right corner missing half its rows: three corners remain.
        assert!(matches!(
            report.scenes[1].background.as_ref().unwrap().method,
            BackgroundMethod::Corners { ref windows } if windows.len() == 3
        ));
        assert_eq!(scenes[1].fill_age.get(0, 20), 10.0);
        assert_eq!(scenes[1].grid.get(0, 20), 0.0);
        for s in &scenes {
            assert!(s.grid.data().iter().all(|v| v.is_finite()));
            assert!(s.fill_age.data().iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn unusable_scene_is_excluded_and_reported() {
        let good = Grid::filled(12, 12, 1.0);
        let bad = Grid::filled(12, 12, f64::NAN);
        let (scenes, report) =
            preprocess_volcano("v", &[raw(1, good.clone()), raw(2, bad), raw(3, good)]).unwrap();
        assert_eq!(scenes.len(), 2);
        assert_eq!(report.excluded, 1);
        assert!(report.scenes[1].excluded.is_some());
    }

    #[test]
    fn rerun_is_bit_identical() {
        let g = Grid::from_fn(16, 16, |r, c| ((r * 31 + c * 17) % 23) as f64 + 270.0);
        let input = [raw(1, g.clone()), raw(9, g.map(|v| v + 1.5))];
        assert_eq!(
            preprocess_volcano("v", &input).unwrap(),
            preprocess_volcano("v", &input).unwrap()
        );
    }
}
