//! Uncertainty-calibrated process capability.
//!
//! Finite-sample `Cpk` estimates are turned into failure-risk probabilities in
//! three layers:
//!
//! 1. [`capability`] estimates `Cpk` (normal or percentile method), runs the
//!    normality diagnostics and picks a best-fit distribution family.
//! 2. [`uncertainty`] attaches a bootstrap standard error and converts the
//!    margin `(C0 - Cpk_hat) / SE` into the baseline probability `pi_stat`
//!    and its log-odds `z_stat`.
//! 3. [`risk_model`] adds a regularized linear residual on standardized
//!    [`features`] in log-odds space: `pi = sigmoid(z_stat + f(x))`.
//!
//! [`decision`] maps probabilities to accept/reject and to the
//! score/level/reason/action chain, [`metrics`] scores probability quality,
//! and [`simulation`] provides the nested Monte Carlo oracle used to check
//! calibration against known processes.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod capability;
pub mod decision;
pub mod distribution;
mod error;
pub mod features;
pub mod metrics;
pub mod optim;
pub mod risk_model;
pub mod rng;
pub mod simulation;
pub mod stats;
pub mod uncertainty;

pub use error::{Error, Result};

/// Default capability threshold `C0`.
pub const DEFAULT_C0: f64 = 1.33;
/// Half-width of the near-threshold band `|Cpk - C0| <= eps`.
pub const DEFAULT_EPSILON_NEAR: f64 = 0.1;
/// Clip applied to `pi_stat` before taking log-odds.
pub const DEFAULT_EPSILON_CLIP: f64 = 1e-6;
/// Bootstrap replications for the standard error.
pub const DEFAULT_N_BOOT: usize = 100;
