//! Conditional generative simulators for option-surface time series.
//!
//! The crate works on panels of log discrete local volatilities (one row per
//! day, one column per strike/maturity grid point). It provides:
//!
//! - [`numerics`]: dense tensors and a reverse-mode autodiff graph with
//!   gradient-of-gradient support,
//! - [`panel`]: CSV ingest, flooring, log transform and lag windows,
//! - [`pca`]: linear state compression,
//! - [`models`]: MLP generators/discriminators, a diagonal-Gaussian head,
//!   VAR(p) and a dilated causal convolution network,
//! - [`training`]: GAN, WGAN-GP and quasi-maximum-likelihood calibration,
//! - [`sampling`]: recursive path generation from historical initial states,
//! - [`metrics`]: distributional, dependence and cross-correlation scores.

pub mod fixtures;
pub mod gradcheck;
pub mod metrics;
pub mod models;
pub mod numerics;
pub mod panel;
pub mod pca;
pub mod rng;
pub mod sampling;
pub mod training;
