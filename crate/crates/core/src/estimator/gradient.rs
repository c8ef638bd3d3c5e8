//! Gradient-based fitting of basis coefficients under a full covariance.

use super::coefficients::CoefficientMatrix;
use super::loss::{check_dims, chunked_reduce};
use super::optim::{ConvergenceReport, OptimizerConfig, Stepper};
use crate::basis::{TensorBasis, TensorScratch};
use crate::dynamics::{CovarianceModel, Drift, Ensemble};
use crate::error::{Error, Result};

/// `∂E/∂a_{ik} = (1/(T·M)) Σ_{m,l} ψ_i(x_l) [D⁻¹(x_l)(f̃(x_l)Δt_l − Δx_l)]_k`,
/// computed directly from the data; row-major `n × d`.
pub fn loss_gradient_coefficients(
    coeffs: &CoefficientMatrix,
    ens: &Ensemble,
    cov: &CovarianceModel,
) -> Result<Vec<f64>> {
    check_dims(coeffs.dim(), ens, cov)?;
    let d = ens.dim();
    let n = coeffs.rows();
    let grid = ens.grid();
    let tb = coeffs.basis();
    let mut grad = chunked_reduce(
        ens.len(),
        |range| {
            let mut g = vec![0.0; n * d];
            let mut scratch = TensorScratch::default();
            let mut resid = vec![0.0; d];
            let mut weighted = vec![0.0; d];
            for m in range {
                let s = ens.trajectory(m).states();
                for l in 0..grid.steps() {
                    let x = &s[l * d..(l + 1) * d];
                    let dt = grid.dt(l);
                    tb.eval_sparse(x, &mut scratch);
                    resid.iter_mut().for_each(|r| *r = 0.0);
                    for (&i, &psi) in scratch.idx.iter().zip(&scratch.val) {
                        for k in 0..d {
                            resid[k] += coeffs.get(i, k) * psi;
                        }
                    }
                    for k in 0..d {
                        resid[k] = resid[k] * dt - (s[(l + 1) * d + k] - x[k]);
                    }
                    cov.apply_inverse(x, &resid, &mut weighted)?;
                    for (&i, &psi) in scratch.idx.iter().zip(&scratch.val) {
                        for k in 0..d {
                            g[i * d + k] += psi * weighted[k];
                        }
                    }
                }
            }
            Ok(g)
        },
        |acc, p| acc.iter_mut().zip(p).for_each(|(a, b)| *a += b),
    )?;
    let norm = 1.0 / (grid.t_end() * ens.len() as f64);
    grad.iter_mut().for_each(|g| *g *= norm);
    Ok(grad)
}

/// The coefficient loss written as `½ aᵀ H a − gᵀ a` over the flat `n·d` vector.
///
/// Assembled once from data so optimizer iterations cost `O((nd)²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticObjective {
    size: usize,
    hessian: Vec<f64>,
    linear: Vec<f64>,
}

impl QuadraticObjective {
    pub fn assemble(ens: &Ensemble, tb: &TensorBasis, cov: &CovarianceModel) -> Result<Self> {
        check_dims(ens.dim(), ens, cov)?;
        let d = ens.dim();
        let size = tb.len() * d;
        let grid = ens.grid();
        let (mut hessian, mut linear) = chunked_reduce(
            ens.len(),
            |range| {
                let mut h = vec![0.0; size * size];
                let mut g = vec![0.0; size];
                let mut scratch = TensorScratch::default();
                let mut dx = vec![0.0; d];
                let mut wdx = vec![0.0; d];
                for m in range {
                    let s = ens.trajectory(m).states();
                    for l in 0..grid.steps() {
                        let x = &s[l * d..(l + 1) * d];
                        let dt = grid.dt(l);
                        let w = cov.inverse_at(x)?;
                        for k in 0..d {
                            dx[k] = s[(l + 1) * d + k] - x[k];
                        }
                        crate::linalg::mat_vec(&w, d, &dx, &mut wdx);
                        tb.eval_sparse(x, &mut scratch);
                        for (&i, &pi) in scratch.idx.iter().zip(&scratch.val) {
                            for (&j, &pj) in scratch.idx.iter().zip(&scratch.val) {
                                let c = pi * pj * dt;
                                for k in 0..d {
                                    let row = (i * d + k) * size + j * d;
                                    for q in 0..d {
                                        h[row + q] += c * w[k * d + q];
                                    }
                                }
                            }
                            for k in 0..d {
                                g[i * d + k] += pi * wdx[k];
                            }
                        }
                    }
                }
                Ok((h, g))
            },
            |acc, p| {
                acc.0.iter_mut().zip(p.0).for_each(|(a, b)| *a += b);
                acc.1.iter_mut().zip(p.1).for_each(|(a, b)| *a += b);
            },
        )?;
        let norm = 1.0 / (grid.t_end() * ens.len() as f64);
        hessian.iter_mut().for_each(|v| *v *= norm);
        linear.iter_mut().for_each(|v| *v *= norm);
        Ok(Self {
            size,
            hessian,
            linear,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn loss(&self, a: &[f64]) -> f64 {
        let mut ha = vec![0.0; self.size];
        crate::linalg::mat_vec(&self.hessian, self.size, a, &mut ha);
        let quad: f64 = a.iter().zip(&ha).map(|(x, y)| x * y).sum();
        let lin: f64 = a.iter().zip(&self.linear).map(|(x, y)| x * y).sum();
        0.5 * quad - lin
    }

    pub fn gradient(&self, a: &[f64], out: &mut [f64]) {
        crate::linalg::mat_vec(&self.hessian, self.size, a, out);
        out.iter_mut().zip(&self.linear).for_each(|(o, g)| *o -= g);
    }

    /// Largest Hessian eigenvalue by power iteration; `1/λ_max` is a safe GD step.
    pub fn max_curvature(&self, iterations: usize) -> f64 {
        let mut v = vec![1.0 / (self.size as f64).sqrt(); self.size];
        let mut hv = vec![0.0; self.size];
        let mut lambda = 0.0;
        for _ in 0..iterations {
            crate::linalg::mat_vec(&self.hessian, self.size, &v, &mut hv);
            let norm = hv.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            lambda = norm;
            v.iter_mut().zip(&hv).for_each(|(a, b)| *a = b / norm);
        }
        lambda
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneralFit {
    pub coefficients: CoefficientMatrix,
    pub report: ConvergenceReport,
}

/// Minimizes the coefficient loss under any SPD covariance by GD or Adam from zero.
pub fn fit_general(
    ens: &Ensemble,
    tb: &TensorBasis,
    cov: &CovarianceModel,
    opt: &OptimizerConfig,
) -> Result<GeneralFit> {
    opt.validate()?;
    let objective = QuadraticObjective::assemble(ens, tb, cov)?;
    let d = ens.dim();
    let mut params = vec![0.0; objective.size()];
    let mut grad = vec![0.0; objective.size()];
    let mut stepper = Stepper::new(opt, params.len());
    let mut loss = objective.loss(&params);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opt.max_iterations {
        objective.gradient(&params, &mut grad);
        stepper.step(&mut params, &grad);
        iterations += 1;
        let next = objective.loss(&params);
        if !next.is_finite() || params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Diverged {
                iteration: iterations,
                loss: next,
            });
        }
        let decrease = loss - next;
        loss = next;
        if decrease >= 0.0 && decrease < opt.tolerance {
            converged = true;
            break;
        }
    }
    Ok(GeneralFit {
        coefficients: CoefficientMatrix::new(tb.clone(), d, params)?,
        report: ConvergenceReport {
            iterations,
            final_loss: loss,
            converged,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{build_domain, BasisFamily, Boundary};
    use crate::dynamics::{simulate_ensemble, FnDrift, InitialDistribution, TimeGrid};
    use crate::estimator::{empirical_loss, fit_basis_drift, Method};

    fn data_2d(cov: &CovarianceModel) -> (Ensemble, TensorBasis) {
        let f = FnDrift::new(2, |x: &[f64], o: &mut [f64]| {
            o[0] = 1.0 - 0.5 * x[0];
            o[1] = 0.3 * x[0] - 0.2 * x[1];
        });
        let grid = TimeGrid::uniform(1.0, 0.01).unwrap();
        let init = InitialDistribution::uniform(2, 0.0, 2.0);
        let ens = simulate_ensemble(&f, cov, &grid, 40, &init, 11, false).unwrap();
        let dom = build_domain(&ens, 0.0).unwrap();
        let tb = TensorBasis::on_domain(&dom, BasisFamily::ClampedBspline, 9, 2, Boundary::Clamp)
            .unwrap();
        (ens, tb)
    }

    #[test]
    fn gradient_vanishes_at_closed_form_solution() {
        let cov = CovarianceModel::diagonal(vec![0.6, 0.8]).unwrap();
        let (ens, tb) = data_2d(&cov);
        let fit = fit_basis_drift(&ens, &tb, &cov, 0.0).unwrap();
        let g = loss_gradient_coefficients(&fit, &ens, &cov).unwrap();
        assert!(g.iter().all(|v| v.abs() <= 1e-8), "{g:?}");
    }

    #[test]
    fn zero_data_zero_gradient() {
        let grid = TimeGrid::uniform(1.0, 0.5).unwrap();
        let ens = Ensemble::from_states(grid, &[vec![vec![1.0, 1.0]; 3], vec![vec![2.0, 3.0]; 3]])
            .unwrap();
        let dom = build_domain(&ens, 0.0).unwrap();
        let tb = TensorBasis::on_domain(&dom, BasisFamily::ClampedBspline, 9, 2, Boundary::Clamp)
            .unwrap();
        let cov = CovarianceModel::full(2, vec![0.6, 0.2, 0.2, 0.8]).unwrap();
        let g = loss_gradient_coefficients(&CoefficientMatrix::zeros(tb, 2), &ens, &cov).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn quadratic_objective_agrees_with_data_pass() {
        let cov = CovarianceModel::full(2, vec![0.6, 0.2, 0.2, 0.8]).unwrap();
        let (ens, tb) = data_2d(&cov);
        let q = QuadraticObjective::assemble(&ens, &tb, &cov).unwrap();
        let a: Vec<f64> = (0..q.size())
            .map(|i| ((i * 7 % 5) as f64 - 2.0) * 0.3)
            .collect();
        let cm = CoefficientMatrix::new(tb, 2, a.clone()).unwrap();
        let direct = empirical_loss(&cm, &ens, &cov).unwrap();
        assert!((q.loss(&a) - direct).abs() < 1e-12 * direct.abs().max(1.0));
        let mut g = vec![0.0; q.size()];
        q.gradient(&a, &mut g);
        let g2 = loss_gradient_coefficients(&cm, &ens, &cov).unwrap();
        for (x, y) in g.iter().zip(&g2) {
            assert!((x - y).abs() < 1e-11 * x.abs().max(1.0));
        }
    }

    #[test]
    fn zero_budget_returns_zeros() {
        let cov = CovarianceModel::diagonal(vec![0.6, 0.8]).unwrap();
        let (ens, tb) = data_2d(&cov);
        let opt = OptimizerConfig {
            max_iterations: 0,
            ..Default::default()
        };
        let fit = fit_general(&ens, &tb, &cov, &opt).unwrap();
        assert!(fit.coefficients.values().iter().all(|&v| v == 0.0));
        assert_eq!(fit.report.iterations, 0);
    }

    #[test]
    fn huge_step_diverges() {
        let cov = CovarianceModel::diagonal(vec![0.6, 0.8]).unwrap();
        let (ens, tb) = data_2d(&cov);
        let opt = OptimizerConfig {
            method: Method::GradientDescent,
            step_size: 1e6,
            max_iterations: 5000,
            tolerance: 0.0,
            seed: 0,
        };
        assert!(matches!(
            fit_general(&ens, &tb, &cov, &opt),
            Err(Error::Diverged { .. })
        ));
    }
}
