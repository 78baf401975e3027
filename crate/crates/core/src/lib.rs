//! Station weather forecasting toolkit.
//!
//! The crate covers the full path from string-encoded surface observations to
//! verified forecasts:
//!
//! - [`ingest`] decodes ISD-style fixed-width fields and scans station archives;
//! - [`qc`] aligns observations to the hourly grid, screens outliers, fills gaps;
//! - [`dataset`] persists clean series, computes standardization statistics and
//!   extreme-value percentiles, and cuts chronological training windows;
//! - [`autodiff`] is a small float64 reverse-mode tensor engine;
//! - [`dynamics`] integrates the relaxation dynamic core used as the physics prior;
//! - [`model`] is the physics-guided residual Transformer and its trainer;
//! - [`baselines`] holds persistence, climatology and ridge-linear forecasters;
//! - [`metrics`] computes MAE/MSE/SEDI and complexity reports.
//!
//! Station-level work fans out through [`parallel::Execution`], which uses rayon
//! when the `parallel` feature is on and a plain loop otherwise. Both paths
//! produce identical results.

pub mod autodiff;
pub mod baselines;
pub mod config;
pub mod dataset;
pub mod dynamics;
pub mod error;
pub mod ingest;
pub mod metrics;
pub mod model;
pub mod parallel;
pub mod qc;
pub mod synth;
pub mod time;
mod variable;

pub use error::{Error, Result};
pub use variable::{Variable, NUM_VARIABLES};
