//! Forecasting engine for thermal image sequences sampled at irregular
//! intervals.
//!
//! The crate is organised bottom-up:
//!
//! * [`ndauto`]: tensors, reverse-mode differentiation, Adam, checkpoints.
//! * [`cells`]: LSTM, Time-LSTM, Time-Aware LSTM, their convolutional
//!   counterparts, U-Net stacking and the forecasting model.
//! * [`baselines`]: last-scene, all-zeros and autoregressive forecasts.
//! * [`pipeline`]: raw raster to excess-temperature scene preprocessing.
//! * [`dataset`]: window selection, splits, sequence construction and the
//!   synthetic corpus generator.
//! * [`train`]: the mini-batch training driver.
//! * [`eval`]: RMSE, derived monitoring series, histogram matching and the
//!   time-perturbation experiment.

pub mod baselines;
pub mod cells;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod grid;
pub mod ndauto;
pub mod pipeline;
pub mod train;

pub use error::{Error, ErrorClass, Result};
pub use grid::Grid;
