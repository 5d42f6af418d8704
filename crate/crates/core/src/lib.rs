//! Calibration of prediction intervals for sparse spatiotemporal count
//! forecasts.
//!
//! The crate covers the full desk-scale loop:
//!
//! - [`data`]: count panels (CSV ingestion, aggregation, splits), distance
//!   kernel adjacency, and a seeded zero-inflated negative binomial generator
//!   that also emits the true per-cell distributions.
//! - [`dist`]: NB / Poisson / Gaussian predictive distributions with pmf,
//!   CDF, quantiles, 5%–95% intervals, and the three training losses.
//! - [`forecaster`]: a moment-matched seasonal NB forecaster plus an oracle
//!   mode that replays (optionally distorted) generator truths.
//! - [`qr`]: exact two-parameter quantile regression under pinball loss.
//! - [`calib`]: the sparsity-aware calibrator (per-bin, zero/non-zero
//!   segmented quantile regression) and five baselines.
//! - [`metrics`]: ENCE, coverage, reliability curves, and risk scores.
//! - [`pipeline`]: file formats and the deterministic end-to-end commands
//!   backing the CLI.
//!
//! All randomness flows through an explicitly seeded ChaCha12 generator, so
//! identical configurations reproduce identical outputs byte for byte.

pub mod calib;
pub mod data;
pub mod dist;
pub mod error;
pub mod forecaster;
pub mod metrics;
pub mod pipeline;
pub mod qr;

pub use error::{Error, Result};
