//! Forecasting engine for periodic time series: a trainable cosine-series
//! periodicity function supplies global periodic context, and a triply
//! residual expansion network forecasts by peeling local and periodic
//! structure off the signal layer by layer.
//!
//! The pipeline is file-driven and fully deterministic per seed:
//!
//! 1. [`synth`] generates benchmark datasets (or bring long-form CSV).
//! 2. [`periodicity`] initializes cosine atoms from the training split and
//!    greedily selects a sparse subset against validation warping cost.
//! 3. [`train`] fits the expansion network and fine-tunes the periodicity
//!    jointly, with hand-rolled reverse-mode gradients and Adam.
//! 4. [`eval`] rolls forecasts across a held-out range, ensembles members by
//!    pointwise median, and scores accuracy.
//!
//! The `depts` binary exposes each stage as a subcommand; see the crate
//! README for the end-to-end walkthrough.

pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod fsio;
pub mod kernels;
pub mod manifest;
pub mod network;
pub mod periodicity;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
