use std::ops::Range;

use rayon::prelude::*;

use crate::dynamics::{CovarianceModel, Drift, Ensemble};
use crate::error::{Error, Result};

/// Trajectories per work unit. Fixed so that sums do not depend on the pool size.
pub(crate) const CHUNK: usize = 32;

/// Maps fixed trajectory chunks in parallel and folds the results in chunk order.
pub(crate) fn chunked_reduce<T, F, C>(count: usize, map: F, mut combine: C) -> Result<T>
where
    T: Send,
    F: Fn(Range<usize>) -> Result<T> + Sync,
    C: FnMut(&mut T, T),
{
    let chunks = count.div_ceil(CHUNK);
    let parts = (0..chunks)
        .into_par_iter()
        .map(|c| map(c * CHUNK..((c + 1) * CHUNK).min(count)))
        .collect::<Result<Vec<_>>>()?;
    let mut iter = parts.into_iter();
    let mut acc = iter.next().expect("at least one chunk");
    for p in iter {
        combine(&mut acc, p);
    }
    Ok(acc)
}

pub(crate) fn check_dims(f_dim: usize, ens: &Ensemble, cov: &CovarianceModel) -> Result<()> {
    if f_dim != ens.dim() || cov.dim() != ens.dim() {
        return Err(Error::invalid(format!(
            "dimension mismatch: drift {f_dim}, data {}, covariance {}",
            ens.dim(),
            cov.dim()
        )));
    }
    Ok(())
}

/// Discretized trajectory likelihood
///
/// `(1/(T·M)) Σ_{m,l} [ ½⟨f(x_l), D⁻¹(x_l) f(x_l)⟩ Δt_l − ⟨f(x_l), D⁻¹(x_l) Δx_l⟩ ]`.
pub fn empirical_loss(f: &dyn Drift, ens: &Ensemble, cov: &CovarianceModel) -> Result<f64> {
    check_dims(f.dim(), ens, cov)?;
    let d = ens.dim();
    let grid = ens.grid();
    let steps = grid.steps();
    let total = chunked_reduce(
        ens.len(),
        |range| {
            let mut fx = vec![0.0; d];
            let mut dfx = vec![0.0; d];
            let mut dx = vec![0.0; d];
            let mut sum = 0.0;
            for m in range {
                let s = ens.trajectory(m).states();
                for l in 0..steps {
                    let x = &s[l * d..(l + 1) * d];
                    f.eval_into(x, &mut fx);
                    cov.apply_inverse(x, &fx, &mut dfx)?;
                    for k in 0..d {
                        dx[k] = s[(l + 1) * d + k] - x[k];
                    }
                    let quad: f64 = fx.iter().zip(&dfx).map(|(a, b)| a * b).sum();
                    let lin: f64 = dfx.iter().zip(&dx).map(|(a, b)| a * b).sum();
                    sum += 0.5 * quad * grid.dt(l) - lin;
                }
            }
            Ok(sum)
        },
        |a, b| *a += b,
    )?;
    Ok(total / (grid.t_end() * ens.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{ConstantDrift, TimeGrid};

    /// Direct double loop, no chunking.
    fn brute_loss_1d(f: f64, path: &[f64], times: &[f64], var: f64) -> f64 {
        let mut s = 0.0;
        for l in 0..path.len() - 1 {
            let dt = times[l + 1] - times[l];
            s += 0.5 * f * f / var * dt - f * (path[l + 1] - path[l]) / var;
        }
        s / times[times.len() - 1]
    }

    #[test]
    fn zero_candidate_gives_zero() {
        let grid = TimeGrid::uniform(1.0, 0.25).unwrap();
        let ens =
            Ensemble::from_states(grid, &[(0..5).map(|i| vec![i as f64 * 0.3]).collect()]).unwrap();
        let cov = CovarianceModel::scalar(1, 0.6).unwrap();
        assert_eq!(
            empirical_loss(&ConstantDrift(vec![0.0]), &ens, &cov).unwrap(),
            0.0
        );
    }

    #[test]
    fn constant_increments() {
        let c = 1.7;
        let var = 0.6;
        let grid = TimeGrid::uniform(1.0, 0.25).unwrap();
        let path: Vec<f64> = grid.times().iter().map(|t| 2.0 + c * t).collect();
        let ens = Ensemble::from_states(grid.clone(), &[path.iter().map(|v| vec![*v]).collect()])
            .unwrap();
        let cov = CovarianceModel::scalar(1, var).unwrap();
        let loss = empirical_loss(&ConstantDrift(vec![c]), &ens, &cov).unwrap();
        let brute = brute_loss_1d(c, &path, grid.times(), var);
        assert!((loss - brute).abs() < 1e-14);
        assert!((loss + c * c / (2.0 * var)).abs() < 1e-12);
    }

    #[test]
    fn homogeneous_in_inverse_covariance() {
        let grid = TimeGrid::uniform(1.0, 0.1).unwrap();
        let path: Vec<Vec<f64>> = grid.times().iter().map(|t| vec![t.sin(), t * t]).collect();
        let ens = Ensemble::from_states(grid, &[path]).unwrap();
        let cov = CovarianceModel::full(2, vec![0.6, 0.2, 0.2, 0.8]).unwrap();
        let f = ConstantDrift(vec![0.3, -1.1]);
        let base = empirical_loss(&f, &ens, &cov).unwrap();
        for c in [0.1, 3.0, 10.0] {
            let scaled = empirical_loss(&f, &ens, &cov.scaled(c).unwrap()).unwrap();
            assert!((scaled - base / c).abs() < 1e-12 * base.abs().max(1.0));
        }
    }
}
