use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Side length of a background sampling window.
pub const WINDOW: usize = 10;

/// How a background value was obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum BackgroundMethod {
    /// Mean of the qualifying corner windows, listed by top-left position.
    Corners { windows: Vec<(usize, usize)> },
    /// No corner qualified; perimeter windows used instead.
    Perimeter { windows: Vec<(usize, usize)> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundEstimate {
    pub value: f64,
    #[serde(flatten)]
    pub method: BackgroundMethod,
}

/// Mean of the valid pixels of the window at `(r0, c0)` if fewer than 10%
/// of its pixels are missing.
fn window_mean(grid: &Grid, r0: usize, c0: usize) -> Option<f64> {
    let mut sum = 0.0;
    let mut valid = 0usize;
    for r in r0..r0 + WINDOW {
        for c in c0..c0 + WINDOW {
            let v = grid.get(r, c);
            if !v.is_nan() {
                sum += v;
                valid += 1;
            }
        }
    }
    let missing = WINDOW * WINDOW - valid;
    (missing * 10 < WINDOW * WINDOW).then(|| sum / valid as f64)
}

/// Window offsets along one edge of length `len`: every multiple of the
/// window size that fits, plus a flush final window when unaligned.
fn edge_offsets(len: usize) -> Vec<usize> {
    let last = len - WINDOW;
    let mut out: Vec<usize> = (0..=last).step_by(WINDOW).collect();
    if out.last() != Some(&last) {
        out.push(last);
    }
    out
}

/// Top-left positions of perimeter windows, clockwise from the top-left
/// corner: along the top edge, down the right edge, back along the bottom
/// edge and up the left edge. Each position appears once.
pub fn perimeter_windows(height: usize, width: usize) -> Vec<(usize, usize)> {
    let cols = edge_offsets(width);
    let rows = edge_offsets(height);
    let (bottom, right) = (height - WINDOW, width - WINDOW);
    let mut seq: Vec<(usize, usize)> = Vec::new();
    seq.extend(cols.iter().map(|&c| (0, c)));
    seq.extend(rows.iter().map(|&r| (r, right)));
    seq.extend(cols.iter().rev().map(|&c| (bottom, c)));
    seq.extend(rows.iter().rev().map(|&r| (r, 0)));
    let mut out = Vec::with_capacity(seq.len());
    for p in seq {
        if !out.contains(&p) {
            out.push(p);
        }
    }
    out
}

/// Background temperature of a scene.
///
/// The four corner windows that are less than 10% missing are averaged
/// (mean of window means). When none qualifies, the first four qualifying
/// perimeter windows are used instead; a scene with no qualifying window
/// anywhere is unusable.
pub fn estimate_background(grid: &Grid) -> Result<BackgroundEstimate> {
    let (h, w) = grid.dims();
    if h < WINDOW || w < WINDOW {
        return Err(Error::UnusableScene(format!(
            "a {h}x{w} scene is smaller than the {WINDOW}x{WINDOW} background window"
        )));
    }
    let corners = [
        (0, 0),
        (0, w - WINDOW),
        (h - WINDOW, w - WINDOW),
        (h - WINDOW, 0),
    ];
    let mut kept = Vec::new();
    let mut means = Vec::new();
    for &(r, c) in &corners {
        if let Some(m) = window_mean(grid, r, c) {
            kept.push((r, c));
            means.push(m);
        }
    }
    let method = if kept.is_empty() {
        for (r, c) in perimeter_windows(h, w) {
            if let Some(m) = window_mean(grid, r, c) {
                kept.push((r, c));
                means.push(m);
                if kept.len() == 4 {
                    break;
                }
            }
        }
        if kept.is_empty() {
            return Err(Error::UnusableScene(
                "no background window is at least 90% observed".into(),
            ));
        }
        BackgroundMethod::Perimeter { windows: kept }
    } else {
        BackgroundMethod::Corners { windows: kept }
    };
    let value = means.iter().sum::<f64>() / means.len() as f64;
    Ok(BackgroundEstimate { value, method })
}

/// `grid - background`, leaving missing pixels missing.
pub fn subtract_background(grid: &Grid, background: f64) -> Grid {
    grid.map(|v| v - background)
}
