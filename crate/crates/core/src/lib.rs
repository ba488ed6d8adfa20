//! Multi-scale patch transformer for probabilistic time-series forecasting.
//!
//! The crate is organized bottom-up:
//!
//! * [`autodiff`]: tensors with reverse-mode differentiation.
//! * [`data`]: CSV loading, normalization, windowing, splits and a synthetic
//!   energy-like generator.
//! * [`patching`]: window-averaged scale transforms and patch extraction.
//! * [`model`]: the forecaster (per-scale patch encoders, future-variable
//!   projection, fusion and Gaussian heads).
//! * [`training`]: losses, the Adam optimizer, training loops for plain,
//!   pretraining and finetuning runs, and checkpoints.
//! * [`uncertainty`]: Monte Carlo dropout, prediction intervals, the metric
//!   suite and scale importance.

pub mod autodiff;
pub mod data;
pub mod error;
pub mod model;
pub mod patching;
pub mod rng;
pub mod tensor;
pub mod training;
pub mod uncertainty;

pub use autodiff::{Graph, Mode, Var};
pub use data::{NormalizationStats, TimeSeriesTable, WindowSample};
pub use error::{Error, LoadError, Result};
pub use model::{GaussianForecast, ModelConfig, ModelParameters};
pub use patching::ScaleSpec;
pub use tensor::Tensor;
