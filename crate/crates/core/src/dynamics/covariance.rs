//! Noise covariance models `D(x)`.
//!
//! Every variant is validated to be symmetric positive definite: constant
//! variants at construction, state-dependent variants at each query.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg;

/// Relative pivot tolerance for factoring `D(x)`.
pub const SPD_TOLERANCE: f64 = 1e-12;

pub type ScalarField = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
/// Writes a row-major `d×d` matrix for the given state.
pub type MatrixField = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

#[derive(Clone)]
enum Kind {
    ScalarConstant {
        dim: usize,
        variance: f64,
    },
    DiagonalConstant {
        variances: Vec<f64>,
    },
    DiagonalFunction {
        fields: Vec<ScalarField>,
    },
    FullConstant {
        dim: usize,
        matrix: Vec<f64>,
        factor: Vec<f64>,
        inverse: Vec<f64>,
    },
    FullFunction {
        dim: usize,
        field: MatrixField,
    },
}

#[derive(Clone)]
pub struct CovarianceModel {
    kind: Kind,
}

impl fmt::Debug for CovarianceModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            Kind::ScalarConstant { dim, variance } => f
                .debug_struct("ScalarConstant")
                .field("dim", dim)
                .field("variance", variance)
                .finish(),
            Kind::DiagonalConstant { variances } => f
                .debug_struct("DiagonalConstant")
                .field("variances", variances)
                .finish(),
            Kind::DiagonalFunction { fields } => f
                .debug_struct("DiagonalFunction")
                .field("dim", &fields.len())
                .finish_non_exhaustive(),
            Kind::FullConstant { matrix, .. } => f
                .debug_struct("FullConstant")
                .field("matrix", matrix)
                .finish(),
            Kind::FullFunction { dim, .. } => f
                .debug_struct("FullFunction")
                .field("dim", dim)
                .finish_non_exhaustive(),
        }
    }
}

fn check_variance(v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::NotSpd { pivot: 0, value: v })
    }
}

impl CovarianceModel {
    /// `D = σ² I` in `dim` dimensions.
    pub fn scalar(dim: usize, variance: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("covariance dimension must be at least 1"));
        }
        check_variance(variance)?;
        Ok(Self {
            kind: Kind::ScalarConstant { dim, variance },
        })
    }

    /// `D = diag(σ_1², …, σ_d²)`.
    pub fn diagonal(variances: Vec<f64>) -> Result<Self> {
        if variances.is_empty() {
            return Err(Error::invalid("covariance dimension must be at least 1"));
        }
        for (k, &v) in variances.iter().enumerate() {
            check_variance(v).map_err(|_| Error::NotSpd { pivot: k, value: v })?;
        }
        Ok(Self {
            kind: Kind::DiagonalConstant { variances },
        })
    }

    /// `D(x) = diag(σ_1²(x), …, σ_d²(x))`; positivity is checked on every query.
    pub fn diagonal_fn(fields: Vec<ScalarField>) -> Result<Self> {
        if fields.is_empty() {
            return Err(Error::invalid("covariance dimension must be at least 1"));
        }
        Ok(Self {
            kind: Kind::DiagonalFunction { fields },
        })
    }

    /// Constant full matrix, row-major `d×d`.
    pub fn full(dim: usize, matrix: Vec<f64>) -> Result<Self> {
        if dim == 0 || matrix.len() != dim * dim {
            return Err(Error::invalid(format!(
                "covariance matrix must have {} entries",
                dim * dim
            )));
        }
        check_symmetric(&matrix, dim)?;
        let mut factor = matrix.clone();
        linalg::cholesky_in_place(&mut factor, dim, SPD_TOLERANCE)?;
        let inverse = linalg::spd_inverse_from_factor(&factor, dim);
        Ok(Self {
            kind: Kind::FullConstant {
                dim,
                matrix,
                factor,
                inverse,
            },
        })
    }

    /// State-dependent full matrix; SPD-ness is checked on every query.
    pub fn full_fn(dim: usize, field: MatrixField) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("covariance dimension must be at least 1"));
        }
        Ok(Self {
            kind: Kind::FullFunction { dim, field },
        })
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            Kind::ScalarConstant { dim, .. } => *dim,
            Kind::DiagonalConstant { variances } => variances.len(),
            Kind::DiagonalFunction { fields } => fields.len(),
            Kind::FullConstant { dim, .. } | Kind::FullFunction { dim, .. } => *dim,
        }
    }

    pub fn is_diagonal(&self) -> bool {
        matches!(
            self.kind,
            Kind::ScalarConstant { .. }
                | Kind::DiagonalConstant { .. }
                | Kind::DiagonalFunction { .. }
        )
    }

    /// Per-coordinate variances when they do not depend on the state.
    pub fn constant_variances(&self) -> Option<Vec<f64>> {
        match &self.kind {
            Kind::ScalarConstant { dim, variance } => Some(vec![*variance; *dim]),
            Kind::DiagonalConstant { variances } => Some(variances.clone()),
            _ => None,
        }
    }

    /// `D(x)` as a row-major `d×d` matrix.
    pub fn matrix_at(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let mut m = vec![0.0; d * d];
        match &self.kind {
            Kind::ScalarConstant { variance, .. } => (0..d).for_each(|k| m[k * d + k] = *variance),
            Kind::DiagonalConstant { variances } => variances
                .iter()
                .enumerate()
                .for_each(|(k, v)| m[k * d + k] = *v),
            Kind::DiagonalFunction { fields } => fields
                .iter()
                .enumerate()
                .for_each(|(k, f)| m[k * d + k] = f(x)),
            Kind::FullConstant { matrix, .. } => m.copy_from_slice(matrix),
            Kind::FullFunction { field, .. } => field(x, &mut m),
        }
        m
    }

    /// Diagonal of `D⁻¹(x)`; only for diagonal models.
    pub fn inverse_variances_at(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        match &self.kind {
            Kind::ScalarConstant { variance, .. } => {
                out.iter_mut().for_each(|o| *o = 1.0 / variance)
            }
            Kind::DiagonalConstant { variances } => out
                .iter_mut()
                .zip(variances)
                .for_each(|(o, v)| *o = 1.0 / v),
            Kind::DiagonalFunction { fields } => {
                for (k, (o, f)) in out.iter_mut().zip(fields).enumerate() {
                    let v = f(x);
                    check_variance(v).map_err(|_| Error::NotSpd { pivot: k, value: v })?;
                    *o = 1.0 / v;
                }
            }
            _ => return Err(Error::invalid("covariance model is not diagonal")),
        }
        Ok(())
    }

    /// Lower-triangular `C` with `C Cᵀ = D(x)`, row-major.
    pub fn factor_at(&self, x: &[f64]) -> Result<Vec<f64>> {
        let d = self.dim();
        match &self.kind {
            Kind::FullConstant { factor, .. } => Ok(factor.clone()),
            Kind::FullFunction { .. } => {
                let mut m = self.matrix_at(x);
                check_symmetric(&m, d)?;
                linalg::cholesky_in_place(&mut m, d, SPD_TOLERANCE)?;
                Ok(m)
            }
            _ => {
                // positivity check
                let mut inv = vec![0.0; d];
                self.inverse_variances_at(x, &mut inv)?;
                let mut c = vec![0.0; d * d];
                self.sqrt_diagonal_into(x, &mut c);
                Ok(c)
            }
        }
    }

    fn sqrt_diagonal_into(&self, x: &[f64], c: &mut [f64]) {
        let d = self.dim();
        match &self.kind {
            Kind::ScalarConstant { variance, .. } => {
                (0..d).for_each(|k| c[k * d + k] = variance.sqrt())
            }
            Kind::DiagonalConstant { variances } => variances
                .iter()
                .enumerate()
                .for_each(|(k, v)| c[k * d + k] = v.sqrt()),
            Kind::DiagonalFunction { fields } => fields
                .iter()
                .enumerate()
                .for_each(|(k, f)| c[k * d + k] = f(x).sqrt()),
            _ => {}
        }
    }

    /// `out = C(x) w`.
    pub fn apply_factor(&self, x: &[f64], w: &[f64], out: &mut [f64]) -> Result<()> {
        let d = self.dim();
        match &self.kind {
            Kind::ScalarConstant { variance, .. } => {
                let s = variance.sqrt();
                out.iter_mut().zip(w).for_each(|(o, wi)| *o = s * wi);
            }
            Kind::DiagonalConstant { variances } => {
                for ((o, wi), v) in out.iter_mut().zip(w).zip(variances) {
                    *o = v.sqrt() * wi;
                }
            }
            Kind::DiagonalFunction { fields } => {
                for (k, ((o, wi), f)) in out.iter_mut().zip(w).zip(fields).enumerate() {
                    let v = f(x);
                    check_variance(v).map_err(|_| Error::NotSpd { pivot: k, value: v })?;
                    *o = v.sqrt() * wi;
                }
            }
            Kind::FullConstant { factor, .. } => linalg::lower_mul(factor, d, w, out),
            Kind::FullFunction { .. } => {
                let c = self.factor_at(x)?;
                linalg::lower_mul(&c, d, w, out);
            }
        }
        Ok(())
    }

    /// `out = D⁻¹(x) v`.
    pub fn apply_inverse(&self, x: &[f64], v: &[f64], out: &mut [f64]) -> Result<()> {
        let d = self.dim();
        match &self.kind {
            Kind::FullConstant { inverse, .. } => linalg::mat_vec(inverse, d, v, out),
            Kind::FullFunction { .. } => {
                let c = self.factor_at(x)?;
                out.copy_from_slice(v);
                linalg::cholesky_solve_in_place(&c, d, out);
            }
            _ => {
                self.inverse_variances_at(x, out)?;
                out.iter_mut().zip(v).for_each(|(o, vi)| *o *= vi);
            }
        }
        Ok(())
    }

    /// `D⁻¹(x)` as a row-major matrix.
    pub fn inverse_at(&self, x: &[f64]) -> Result<Vec<f64>> {
        let d = self.dim();
        match &self.kind {
            Kind::FullConstant { inverse, .. } => Ok(inverse.clone()),
            Kind::FullFunction { .. } => {
                let c = self.factor_at(x)?;
                Ok(linalg::spd_inverse_from_factor(&c, d))
            }
            _ => {
                let mut inv = vec![0.0; d];
                self.inverse_variances_at(x, &mut inv)?;
                let mut m = vec![0.0; d * d];
                inv.iter().enumerate().for_each(|(k, v)| m[k * d + k] = *v);
                Ok(m)
            }
        }
    }

    /// The model for `c · D(x)`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::invalid("covariance scale must be positive"));
        }
        match &self.kind {
            Kind::ScalarConstant { dim, variance } => Self::scalar(*dim, variance * c),
            Kind::DiagonalConstant { variances } => {
                Self::diagonal(variances.iter().map(|v| v * c).collect())
            }
            Kind::DiagonalFunction { fields } => Self::diagonal_fn(
                fields
                    .iter()
                    .map(|f| {
                        let f = f.clone();
                        Arc::new(move |x: &[f64]| c * f(x)) as ScalarField
                    })
                    .collect(),
            ),
            Kind::FullConstant { dim, matrix, .. } => {
                Self::full(*dim, matrix.iter().map(|v| v * c).collect())
            }
            Kind::FullFunction { dim, field } => {
                let field = field.clone();
                Self::full_fn(
                    *dim,
                    Arc::new(move |x: &[f64], out: &mut [f64]| {
                        field(x, out);
                        out.iter_mut().for_each(|v| *v *= c);
                    }),
                )
            }
        }
    }

    /// Drops off-diagonal terms; diagonal models are returned as is.
    pub fn diagonal_part(&self) -> Result<Self> {
        match &self.kind {
            Kind::FullConstant { dim, matrix, .. } => {
                Self::diagonal((0..*dim).map(|k| matrix[k * dim + k]).collect())
            }
            Kind::FullFunction { dim, field } => {
                let d = *dim;
                let fields = (0..d)
                    .map(|k| {
                        let field = field.clone();
                        Arc::new(move |x: &[f64]| {
                            let mut m = vec![0.0; d * d];
                            field(x, &mut m);
                            m[k * d + k]
                        }) as ScalarField
                    })
                    .collect();
                Self::diagonal_fn(fields)
            }
            _ => Ok(self.clone()),
        }
    }
}

fn check_symmetric(m: &[f64], d: usize) -> Result<()> {
    let scale = m.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    for i in 0..d {
        for j in i + 1..d {
            if (m[i * d + j] - m[j * d + i]).abs() > 1e-12 * scale {
                return Err(Error::invalid("covariance matrix is not symmetric"));
            }
        }
    }
    Ok(())
}

/// Lower-triangular factor `C` with `C Cᵀ = D(x)`.
pub fn covariance_factor(cov: &CovarianceModel, x: &[f64]) -> Result<Vec<f64>> {
    cov.factor_at(x)
}
