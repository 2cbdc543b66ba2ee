use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Min-max scaling bounds, fit on training data only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub x_min: f64,
    pub x_max: f64,
}

impl ScalerParams {
    pub fn new(x_min: f64, x_max: f64) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite()) {
            return Err(Error::NonFinite(format!("scaler bounds {x_min}, {x_max}")));
        }
        if x_max <= x_min {
            return Err(Error::Data(format!(
                "degenerate scaler range: max {x_max} is not above min {x_min}"
            )));
        }
        Ok(ScalerParams { x_min, x_max })
    }

    /// Bounds over every non-missing pixel of every grid.
    pub fn fit<'a>(grids: impl IntoIterator<Item = &'a Grid>) -> Result<Self> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for g in grids {
            for &v in g.data() {
                if !v.is_nan() {
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
        }
        if lo > hi {
            return Err(Error::Data("no pixels to fit scaler bounds on".into()));
        }
        Self::new(lo, hi)
    }

    #[inline]
    pub fn scale(&self, x: f64) -> f64 {
        (x - self.x_min) / (self.x_max - self.x_min)
    }

    #[inline]
    pub fn inverse(&self, x: f64) -> f64 {
        x * (self.x_max - self.x_min) + self.x_min
    }

    /// Scales every pixel; values outside the fitted range are not clipped.
    pub fn scale_grid(&self, g: &Grid) -> Grid {
        g.map(|v| self.scale(v))
    }

    pub fn inverse_grid(&self, g: &Grid) -> Grid {
        g.map(|v| self.inverse(v))
    }
}
