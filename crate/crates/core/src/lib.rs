//! Forecasting of daily peak electricity demand: its magnitude and its
//! half-hourly timing.
//!
//! The pipeline runs from raw half-hourly demand and hourly weather-station
//! temperatures ([`ingest`]) to daily and half-hourly feature tables
//! ([`features`]), through penalized-spline additive models
//! ([`smooth_basis`], [`gam_engine`]), small neural networks
//! ([`nn_engine`]) and autoregressive or persistence baselines
//! ([`baselines`]), to a rolling-origin backtest with bootstrap and
//! Diebold–Mariano comparisons ([`evaluation`]).

pub mod error;
pub mod baselines;
pub mod cli;
pub mod config;
pub mod features;
pub mod evaluation;
pub mod gam_engine;
pub mod ingest;
pub mod nn_engine;
pub mod smooth_basis;
pub mod synthetic;

pub use error::{Error, Result};
