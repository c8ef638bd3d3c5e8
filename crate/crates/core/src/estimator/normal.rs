//! Closed-form fitting for diagonal covariance.
//!
//! With `D(x) = diag(σ_k²(x))` the loss splits into `d` independent quadratics
//! `½ α_kᵀ A_k α_k − α_kᵀ b_k`, one per output coordinate, so each coefficient
//! column solves `A_k α_k = b_k`.

use super::coefficients::CoefficientMatrix;
use super::loss::{check_dims, chunked_reduce};
use crate::basis::{TensorBasis, TensorScratch};
use crate::dynamics::{CovarianceModel, Ensemble};
use crate::error::{Error, Result};
use crate::linalg;

/// Relative pivot threshold below which a normal matrix counts as singular.
pub const NORMAL_PIVOT_TOLERANCE: f64 = 1e-13;

/// Per-output-dimension normal equations `A_k α_k = b_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalSystem {
    basis: TensorBasis,
    dim: usize,
    /// `A_k`, row-major `n × n`
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    samples: usize,
}

impl NormalSystem {
    pub fn basis(&self) -> &TensorBasis {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn size(&self) -> usize {
        self.basis.len()
    }

    pub fn matrix(&self, k: usize) -> &[f64] {
        &self.a[k]
    }

    pub fn rhs(&self, k: usize) -> &[f64] {
        &self.b[k]
    }

    /// Number of `(m, l)` pairs summed.
    pub fn samples(&self) -> usize {
        self.samples
    }

    /// `1e-10 · trace(A_k) / n`
    pub fn default_ridge(&self, k: usize) -> f64 {
        let n = self.size();
        let trace: f64 = (0..n).map(|i| self.a[k][i * n + i]).sum();
        1e-10 * trace / n as f64
    }

    /// Solves column `k` of `(A_k + ridge·I) α_k = b_k`.
    pub fn solve_column(&self, k: usize, ridge: f64) -> Result<Vec<f64>> {
        let n = self.size();
        let mut l = self.a[k].clone();
        for i in 0..n {
            l[i * n + i] += ridge;
        }
        linalg::cholesky_in_place(&mut l, n, NORMAL_PIVOT_TOLERANCE)
            .map_err(|_| Error::SingularSystem { dim: k })?;
        let mut x = self.b[k].clone();
        linalg::cholesky_solve_in_place(&l, n, &mut x);
        // one step of iterative refinement
        let mut r = self.b[k].clone();
        for (i, ri) in r.iter_mut().enumerate() {
            let row = &self.a[k][i * n..(i + 1) * n];
            *ri -= ridge * x[i] + row.iter().zip(&x).map(|(a, x)| a * x).sum::<f64>();
        }
        linalg::cholesky_solve_in_place(&l, n, &mut r);
        x.iter_mut().zip(&r).for_each(|(x, r)| *x += r);
        Ok(x)
    }
}

/// Sums `ψ_iψ_jΔt` (upper triangle) and `ψ_iΔx_k`, weighted per sample by
/// `1/σ_k²(x)` when `weights` is set; otherwise unweighted (one shared matrix).
struct Partial {
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
}

fn accumulate(
    ens: &Ensemble,
    tb: &TensorBasis,
    cov: &CovarianceModel,
    range: std::ops::Range<usize>,
    per_sample_weights: bool,
) -> Result<Partial> {
    let d = ens.dim();
    let n = tb.len();
    let grid = ens.grid();
    let n_mats = if per_sample_weights { d } else { 1 };
    let mut a = vec![vec![0.0; n * n]; n_mats];
    let mut b = vec![vec![0.0; n]; d];
    let mut scratch = TensorScratch::default();
    let mut w = vec![1.0; d];
    for m in range {
        let s = ens.trajectory(m).states();
        for l in 0..grid.steps() {
            let x = &s[l * d..(l + 1) * d];
            let dt = grid.dt(l);
            if per_sample_weights {
                cov.inverse_variances_at(x, &mut w)?;
            }
            tb.eval_sparse(x, &mut scratch);
            let (idx, val) = (&scratch.idx, &scratch.val);
            for (p, (&i, &vi)) in idx.iter().zip(val).enumerate() {
                for (&j, &vj) in idx[p..].iter().zip(&val[p..]) {
                    let (r, c) = if i <= j { (i, j) } else { (j, i) };
                    let g = vi * vj * dt;
                    for (mat, wk) in a.iter_mut().zip(&w) {
                        mat[r * n + c] += g * wk;
                    }
                }
                for k in 0..d {
                    let dx = s[(l + 1) * d + k] - x[k];
                    b[k][i] += vi * dx * w[k];
                }
            }
        }
    }
    Ok(Partial { a, b })
}

/// Builds `A_k(i,j) = (1/(T·M)) Σ ψ_iψ_j Δt/σ_k²` and `b_k(i) = (1/(T·M)) Σ ψ_i (Δx)_k/σ_k²`.
pub fn assemble_diagonal_system(
    ens: &Ensemble,
    tb: &TensorBasis,
    cov: &CovarianceModel,
) -> Result<NormalSystem> {
    check_dims(ens.dim(), ens, cov)?;
    if !cov.is_diagonal() {
        return Err(Error::invalid(
            "closed-form assembly needs a diagonal covariance; use fit_general",
        ));
    }
    if tb.dim() != ens.dim() {
        return Err(Error::invalid("basis dimension does not match data"));
    }
    let d = ens.dim();
    let n = tb.len();
    let constant = cov.constant_variances();
    let per_sample = constant.is_none();
    let total = chunked_reduce(
        ens.len(),
        |range| accumulate(ens, tb, cov, range, per_sample),
        |acc, p| {
            for (x, y) in acc.a.iter_mut().zip(p.a) {
                x.iter_mut().zip(y).for_each(|(u, v)| *u += v);
            }
            for (x, y) in acc.b.iter_mut().zip(p.b) {
                x.iter_mut().zip(y).for_each(|(u, v)| *u += v);
            }
        },
    )?;
    let norm = 1.0 / (ens.grid().t_end() * ens.len() as f64);
    let mut a = Vec::with_capacity(d);
    let mut b = Vec::with_capacity(d);
    for k in 0..d {
        let (src, factor) = match &constant {
            Some(vars) => (&total.a[0], norm / vars[k]),
            None => (&total.a[k], norm),
        };
        let mut ak = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = src[i * n + j] * factor;
                ak[i * n + j] = v;
                ak[j * n + i] = v;
            }
        }
        a.push(ak);
        b.push(total.b[k].iter().map(|v| v * factor).collect());
    }
    Ok(NormalSystem {
        basis: tb.clone(),
        dim: d,
        a,
        b,
        samples: ens.len() * ens.grid().steps(),
    })
}

/// Solves every column with the given ridge; fails on the first singular column.
pub fn solve_system(sys: &NormalSystem, ridge: f64) -> Result<CoefficientMatrix> {
    if !(ridge >= 0.0) {
        return Err(Error::invalid("ridge must be nonnegative"));
    }
    let columns = (0..sys.dim)
        .map(|k| sys.solve_column(k, ridge))
        .collect::<Result<Vec<_>>>()?;
    from_columns(sys, &columns)
}

fn from_columns(sys: &NormalSystem, columns: &[Vec<f64>]) -> Result<CoefficientMatrix> {
    let n = sys.size();
    let mut coeffs = vec![0.0; n * sys.dim];
    for (k, col) in columns.iter().enumerate() {
        for i in 0..n {
            coeffs[i * sys.dim + k] = col[i];
        }
    }
    CoefficientMatrix::new(sys.basis.clone(), sys.dim, coeffs)
}

/// Assembles and solves. With `ridge = 0`, a singular column is retried with
/// [`NormalSystem::default_ridge`], which pins coefficients of unvisited basis
/// functions at zero.
pub fn fit_basis_drift(
    ens: &Ensemble,
    tb: &TensorBasis,
    cov: &CovarianceModel,
    ridge: f64,
) -> Result<CoefficientMatrix> {
    let sys = assemble_diagonal_system(ens, tb, cov)?;
    if !(ridge >= 0.0) {
        return Err(Error::invalid("ridge must be nonnegative"));
    }
    let columns = (0..sys.dim)
        .map(|k| match sys.solve_column(k, ridge) {
            Err(Error::SingularSystem { .. }) if ridge == 0.0 => {
                sys.solve_column(k, sys.default_ridge(k))
            }
            other => other,
        })
        .collect::<Result<Vec<_>>>()?;
    from_columns(&sys, &columns)
}
