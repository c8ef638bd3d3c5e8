//! SDE model pieces: time grids, trajectory ensembles, drift and covariance
//! abstractions, the Euler–Maruyama simulator and the quadratic-variation
//! noise estimate.

mod covariance;
mod drift;
mod grid;
mod simulate;

pub use covariance::{covariance_factor, CovarianceModel, MatrixField, ScalarField, SPD_TOLERANCE};
pub use drift::{ConstantDrift, Drift, FnDrift};
pub use grid::{Ensemble, TimeGrid, Trajectory};
pub(crate) use simulate::advance;
pub use simulate::{
    em_step, quadratic_variation_sigma, simulate_ensemble, trajectory_rng, InitialDistribution,
};
