//! Perturbed compressed SGD with error feedback.
//!
//! The crate implements the compressed stochastic gradient descent update
//! with error feedback and periodic error resets, a zoo of gradient
//! compressors with exact communication accounting, a hyperparameter planner
//! that sizes runs for convergence to approximate first- and second-order
//! stationary points, a simulated synchronous multi-worker cluster, and an
//! analysis layer that certifies stationarity and checks the governing
//! inequalities empirically on synthetic objectives.
//!
//! Multi-seed sweeps and Monte-Carlo estimates are data-parallel via rayon
//! (default feature `parallel`); disabling the feature yields a fully
//! sequential build with identical results.

// `!(x > 0.0)` is used on purpose throughout: it rejects NaN along with
// nonpositive values, which `x <= 0.0` would not.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cluster;
pub mod compressors;
pub mod config;
pub mod error;
pub mod linalg;
pub mod objectives;
pub mod optimizer;
pub mod parallel;
pub mod suite;
pub mod trace;

pub use error::{Error, Result};
