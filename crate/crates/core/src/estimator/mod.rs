//! Drift estimation from the discretized trajectory likelihood.
//!
//! Basis models are linear in their coefficients, so the loss is quadratic:
//! diagonal covariance reduces to `d` normal-equation solves, full covariance
//! goes through gradient descent. Network drifts are trained by backpropagation.

mod coefficients;
mod gradient;
mod loss;
mod mlp;
mod normal;
mod optim;

pub use coefficients::CoefficientMatrix;
pub use gradient::{fit_general, loss_gradient_coefficients, GeneralFit, QuadraticObjective};
pub use loss::empirical_loss;
pub use mlp::{
    fit_mlp, mlp_loss_and_gradient, parameter_count, train, Activation, MlpDrift, MlpSpec,
    TrainingReport, WeightInit,
};
pub use normal::{
    assemble_diagonal_system, fit_basis_drift, solve_system, NormalSystem, NORMAL_PIVOT_TOLERANCE,
};
pub use optim::{ConvergenceReport, Method, OptimizerConfig};
