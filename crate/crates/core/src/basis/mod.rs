//! Data-driven domains and finite-dimensional function spaces.

mod domain;
mod tensor;
mod univariate;

pub use domain::{build_domain, Domain};
pub use tensor::{TensorBasis, TensorScratch};
pub use univariate::{uniform_knots, BasisFamily, BasisSet1D, Boundary};

/// `eval_basis_1d`: values of every function of `b` at `x`.
pub fn eval_basis_1d(b: &BasisSet1D, x: f64) -> Vec<f64> {
    b.eval(x)
}

/// `eval_tensor`: values of every tensor-product function at `x`.
pub fn eval_tensor(tb: &TensorBasis, x: &[f64]) -> Vec<f64> {
    tb.eval(x)
}
