//! Recurrent cells for irregularly sampled image sequences.
//!
//! Six cell kinds share one gate vocabulary:
//!
//! | kind                   | layout | time input                  |
//! |------------------------|--------|-----------------------------|
//! | `Lstm`                 | dense  | none                        |
//! | `TimeLstm`             | dense  | gap to the next scene       |
//! | `TimeAwareLstm`        | dense  | gap since the previous scene|
//! | `ConvLstm`             | conv   | none                        |
//! | `ConvTimeLstm`         | conv   | per-pixel map, next scene   |
//! | `ConvTimeAwareLstm`    | conv   | per-pixel map, prev. scene  |
//!
//! Dense cells run on a `[pixels, features]` batch, so every pixel is an
//! independent sequence sharing one parameter set. Convolutional cells run
//! on `[channels, height, width]` grids with same-padded convolutions.
//!
//! Elapsed times enter learned gates divided by [`ModelSpec::dt_scale`];
//! the memory discount [`time_discount`] always sees raw days.

mod model;
#[cfg(test)]
mod oracles;
mod params;
mod step;

pub use model::{Forecaster, ForwardOptions, LayerShape};
pub use params::{register_layer, CellParams, Decomposition, Gate};
pub use step::{
    convlstm_step, convtimeawarelstm_step, convtimelstm_step, convtimelstm_step_with, lstm_step,
    timeawarelstm_step, timelstm_gate1, timelstm_step, CellState, OutputSquash,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean gap between scenes in the reference archive, in days.
pub const DEFAULT_DT_SCALE: f64 = 37.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellKind {
    Lstm,
    TimeLstm,
    TimeAwareLstm,
    ConvLstm,
    ConvTimeLstm,
    ConvTimeAwareLstm,
}

/// Which interval a time-aware cell is fed at step `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeConvention {
    /// `t[i+1] - t[i]`: the time following an observation.
    Following,
    /// `t[i] - t[i-1]`: the time preceding an observation.
    Preceding,
}

impl CellKind {
    pub const ALL: [CellKind; 6] = [
        CellKind::Lstm,
        CellKind::TimeLstm,
        CellKind::TimeAwareLstm,
        CellKind::ConvLstm,
        CellKind::ConvTimeLstm,
        CellKind::ConvTimeAwareLstm,
    ];

    pub fn is_conv(self) -> bool {
        matches!(
            self,
            CellKind::ConvLstm | CellKind::ConvTimeLstm | CellKind::ConvTimeAwareLstm
        )
    }

    pub fn time_convention(self) -> Option<TimeConvention> {
        match self {
            CellKind::TimeLstm | CellKind::ConvTimeLstm => Some(TimeConvention::Following),
            CellKind::TimeAwareLstm | CellKind::ConvTimeAwareLstm => {
                Some(TimeConvention::Preceding)
            }
            CellKind::Lstm | CellKind::ConvLstm => None,
        }
    }

    pub fn uses_time(self) -> bool {
        self.time_convention().is_some()
    }

    pub fn name(self) -> &'static str {
        match self {
            CellKind::Lstm => "lstm",
            CellKind::TimeLstm => "time-lstm",
            CellKind::TimeAwareLstm => "time-aware-lstm",
            CellKind::ConvLstm => "conv-lstm",
            CellKind::ConvTimeLstm => "conv-time-lstm",
            CellKind::ConvTimeAwareLstm => "conv-time-aware-lstm",
        }
    }
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CellKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CellKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown cell kind {s:?}")))
    }
}

/// Declarative description of a neural forecaster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub cell_kind: CellKind,
    pub hidden_dims: Vec<usize>,
    #[serde(default = "default_kernel")]
    pub kernel_size: usize,
    #[serde(default)]
    pub unet: bool,
    pub window_length: usize,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default = "default_dt_scale")]
    pub dt_scale: f64,
}

fn default_kernel() -> usize {
    3
}

fn default_dt_scale() -> f64 {
    DEFAULT_DT_SCALE
}

impl ModelSpec {
    pub fn new(cell_kind: CellKind, hidden_dims: Vec<usize>, window_length: usize) -> Self {
        ModelSpec {
            cell_kind,
            hidden_dims,
            kernel_size: default_kernel(),
            unet: false,
            window_length,
            weight_decay: 0.0,
            dt_scale: DEFAULT_DT_SCALE,
        }
    }

    pub fn with_unet(mut self) -> Self {
        self.unet = true;
        self
    }

    pub fn with_kernel(mut self, k: usize) -> Self {
        self.kernel_size = k;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.hidden_dims.is_empty() || self.hidden_dims.contains(&0) {
            return bad(format!(
                "hidden dims must be non-empty and positive, got {:?}",
                self.hidden_dims
            ));
        }
        if self.window_length == 0 {
            return bad("window length must be at least 1".into());
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!(
                "weight decay must be >= 0, got {}",
                self.weight_decay
            ));
        }
        if !(self.dt_scale > 0.0 && self.dt_scale.is_finite()) {
            return bad(format!("dt scale must be positive, got {}", self.dt_scale));
        }
        if self.cell_kind.is_conv() && self.kernel_size % 2 == 0 {
            return bad(format!("kernel size must be odd, got {}", self.kernel_size));
        }
        if self.unet {
            if !self.cell_kind.is_conv() {
                return bad("u-net composition needs a convolutional cell".into());
            }
            let d = &self.hidden_dims;
            let palindrome = d.iter().eq(d.iter().rev());
            if d.len() < 3 || d.len() % 2 == 0 || !palindrome {
                return bad(format!(
                    "u-net needs an odd number (>= 3) of palindromic hidden dims, got {d:?}"
                ));
            }
        }
        Ok(())
    }

    /// Number of pooling stages of a U-Net model (zero otherwise).
    pub fn unet_depth(&self) -> usize {
        if self.unet {
            (self.hidden_dims.len() - 1) / 2
        } else {
            0
        }
    }
}

/// Memory discount applied to the short-term component of a Time-Aware
/// cell: `1 / ln(e + Δt)`. Equals 1 at `Δt = 0` and decreases
/// monotonically.
pub fn time_discount(dt_days: f64) -> f64 {
    1.0 / (std::f64::consts::E + dt_days).ln()
}
