//! Drift identification for stochastic differential equations.
//!
//! Given an ensemble of sampled trajectories of `dx = f(x) dt + dw` with known
//! noise covariance, estimate `f` by minimizing the discretized trajectory
//! likelihood over a basis expansion or a neural network, then score the
//! estimate against the truth.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod basis;
pub mod dynamics;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod linalg;
pub mod metrics;

pub use error::{Error, Result};
