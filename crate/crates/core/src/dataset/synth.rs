use std::path::Path;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::pipeline::{write_json, write_raster, Manifest, ManifestEntry, SceneLabel};

/// Parameters of a synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub volcanoes: usize,
    pub scenes: usize,
    pub height: usize,
    pub width: usize,
    /// Mean gap between scenes in days.
    pub mean_gap: f64,
    /// Log-space spread of the gap distribution.
    pub gap_sigma: f64,
    /// Chance that a scene loses a corner wedge of its field of view.
    pub wedge_probability: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            volcanoes: 3,
            scenes: 60,
            height: 24,
            width: 24,
            mean_gap: 37.0,
            gap_sigma: 0.8,
            wedge_probability: 0.25,
        }
    }
}

/// A Gaussian hotspot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    pub row: f64,
    pub col: f64,
    /// Peak excess temperature, °C.
    pub amplitude: f64,
    /// Standard deviation in pixels.
    pub width: f64,
}

impl Blob {
    fn value(&self, r: usize, c: usize) -> f64 {
        let dr = r as f64 - self.row;
        let dc = c as f64 - self.col;
        self.amplitude * (-(dr * dr + dc * dc) / (2.0 * self.width * self.width)).exp()
    }
}

/// A generated volcano: manifest, rasters in manifest order, and the
/// hotspots injected into each scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticVolcano {
    pub manifest: Manifest,
    pub rasters: Vec<Grid>,
    pub blobs: Vec<Vec<Blob>>,
}

/// Background field plus hotspots plus white noise. No pixels are missing.
pub fn render_scene(
    height: usize,
    width: usize,
    background: f64,
    tilt: (f64, f64),
    blobs: &[Blob],
    noise_sd: f64,
    rng: &mut impl Rng,
) -> Grid {
    let noise = Normal::new(0.0, noise_sd).expect("noise sd is finite and non-negative");
    Grid::from_fn(height, width, |r, c| {
        let base = background + tilt.0 * r as f64 + tilt.1 * c as f64;
        base + blobs.iter().map(|b| b.value(r, c)).sum::<f64>() + noise.sample(rng)
    })
}

/// Mean-reverting step: `x` relaxes towards `mean` with time constant `tau`
/// over `dt` days, with stationary spread `sd`.
fn relax(x: f64, mean: f64, sd: f64, tau: f64, dt: f64, rng: &mut impl Rng) -> f64 {
    let rho = (-dt / tau).exp();
    let z: f64 = rng.sample(rand_distr::StandardNormal);
    mean + (x - mean) * rho + sd * (1.0 - rho * rho).sqrt() * z
}

/// Blanks a right triangle in one corner, leaving the other three intact.
fn cut_wedge(grid: &mut Grid, rng: &mut impl Rng) {
    let (h, w) = grid.dims();
    let corner = rng.random_range(0..4);
    let leg = rng.random_range(h.min(w) / 3..=h.min(w) * 2 / 3) as isize;
    for r in 0..h {
        for c in 0..w {
            let (dr, dc) = match corner {
                0 => (r, c),
                1 => (r, w - 1 - c),
                2 => (h - 1 - r, w - 1 - c),
                _ => (h - 1 - r, c),
            };
            if ((dr + dc) as isize) < leg {
                grid.set(r, c, f64::NAN);
            }
        }
    }
}

/// Generates a deterministic corpus. Each volcano has a fixed background
/// with a gentle tilt and 0 to 3 hotspots whose amplitude and position
/// drift by mean-reverting random walks; gaps are log-normal.
pub fn synthesize_corpus(config: &SynthConfig) -> Result<Vec<SyntheticVolcano>> {
    if config.height < 10 || config.width < 10 {
        return Err(Error::InvalidArgument(
            "synthetic scenes must be at least 10x10".into(),
        ));
    }
    if !(config.mean_gap > 0.0 && config.gap_sigma >= 0.0) {
        return Err(Error::InvalidArgument("gap mean must be positive".into()));
    }
    let (h, w) = (config.height, config.width);
    let mu = config.mean_gap.ln() - config.gap_sigma * config.gap_sigma / 2.0;
    let gaps =
        LogNormal::new(mu, config.gap_sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let start = NaiveDate::from_ymd_opt(2000, 3, 1).expect("valid date");
    let mut out = Vec::with_capacity(config.volcanoes);
    for v in 0..config.volcanoes {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(v as u64 + 1);
        let id = format!("volcano-{:02}", v + 1);
        let background = rng.random_range(-5.0..25.0);
        let tilt = (rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05));
        let noise_sd = rng.random_range(2.0..3.5);
        let count = rng.random_range(0..=3);
        let homes: Vec<Blob> = (0..count)
            .map(|_| Blob {
                row: rng.random_range(0.3..0.7) * h as f64,
                col: rng.random_range(0.3..0.7) * w as f64,
                amplitude: rng.random_range(20.0..70.0),
                width: rng.random_range(1.0..2.5),
            })
            .collect();
        let mut current = homes.clone();
        let mut date = start + chrono::Days::new(rng.random_range(0..365));
        let mut entries = Vec::with_capacity(config.scenes);
        let mut rasters = Vec::with_capacity(config.scenes);
        let mut truth = Vec::with_capacity(config.scenes);
        for k in 0..config.scenes {
            if k > 0 {
                let gap = gaps.sample(&mut rng).round().max(1.0);
                date = date + chrono::Days::new(gap as u64);
                for (b, home) in current.iter_mut().zip(&homes) {
                    b.amplitude = relax(
                        b.amplitude,
                        home.amplitude,
                        0.4 * home.amplitude,
                        40.0,
                        gap,
                        &mut rng,
                    )
                    .max(0.0);
                    b.row = relax(b.row, home.row, 1.0, 120.0, gap, &mut rng);
                    b.col = relax(b.col, home.col, 1.0, 120.0, gap, &mut rng);
                }
            }
            let mut grid = render_scene(h, w, background, tilt, &current, noise_sd, &mut rng);
            if rng.random_bool(config.wedge_probability) {
                cut_wedge(&mut grid, &mut rng);
            }
            // Hot pixels occasionally drop out, as recovery pixels do.
            for r in 0..h {
                for c in 0..w {
                    let excess = current.iter().map(|b| b.value(r, c)).sum::<f64>();
                    if excess > 30.0 && rng.random_bool(0.05) {
                        grid.set(r, c, f64::NAN);
                    }
                }
            }
            entries.push(ManifestEntry {
                file: format!("{id}/scene-{k:03}.f32"),
                date,
                label: if rng.random_bool(0.9) {
                    SceneLabel::Viable
                } else {
                    SceneLabel::Uncertain
                },
            });
            rasters.push(grid);
            truth.push(current.clone());
        }
        out.push(SyntheticVolcano {
            manifest: Manifest {
                volcano_id: id,
                width: w,
                height: h,
                scenes: entries,
            },
            rasters,
            blobs: truth,
        });
    }
    Ok(out)
}

/// Writes each volcano's manifest as `<dir>/<id>.json` and its rasters
/// beside it.
pub fn write_corpus(dir: &Path, corpus: &[SyntheticVolcano]) -> Result<()> {
    for v in corpus {
        for (entry, grid) in v.manifest.scenes.iter().zip(&v.rasters) {
            write_raster(&dir.join(&entry.file), grid)?;
        }
        write_json(
            &dir.join(format!("{}.json", v.manifest.volcano_id)),
            &v.manifest,
        )?;
    }
    Ok(())
}
