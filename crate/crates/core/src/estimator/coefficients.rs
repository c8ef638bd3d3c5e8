use std::cell::RefCell;

use crate::basis::{TensorBasis, TensorScratch};
use crate::dynamics::Drift;
use crate::error::{Error, Result};

thread_local! {
    static SCRATCH: RefCell<TensorScratch> = RefCell::new(TensorScratch::default());
}

/// `f̂(x) = Σ_i a_i ψ_i(x)` with `a` stored row-major `n × d`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix {
    basis: TensorBasis,
    dim: usize,
    coeffs: Vec<f64>,
}

impl CoefficientMatrix {
    pub fn new(basis: TensorBasis, dim: usize, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != basis.len() * dim {
            return Err(Error::invalid(format!(
                "expected {} coefficients, found {}",
                basis.len() * dim,
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("coefficients must be finite"));
        }
        Ok(Self { basis, dim, coeffs })
    }

    pub fn zeros(basis: TensorBasis, dim: usize) -> Self {
        let coeffs = vec![0.0; basis.len() * dim];
        Self { basis, dim, coeffs }
    }

    pub fn basis(&self) -> &TensorBasis {
        &self.basis
    }

    /// Number of basis functions `n`.
    pub fn rows(&self) -> usize {
        self.basis.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.coeffs[i * self.dim + k]
    }

    /// Column `k`, i.e. the coefficients of output coordinate `k`.
    pub fn column(&self, k: usize) -> Vec<f64> {
        (0..self.rows()).map(|i| self.get(i, k)).collect()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .fold(0.0, |a, (x, y)| a.max((x - y).abs()))
    }
}

impl Drift for CoefficientMatrix {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        SCRATCH.with(|s| {
            let mut s = s.borrow_mut();
            self.basis.eval_sparse(x, &mut s);
            for (&i, &psi) in s.idx.iter().zip(&s.val) {
                let row = &self.coeffs[i * self.dim..(i + 1) * self.dim];
                for (o, a) in out.iter_mut().zip(row) {
                    *o += a * psi;
                }
            }
        });
    }
}
