//! Euler–Maruyama ensemble generation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::covariance::CovarianceModel;
use super::drift::Drift;
use super::grid::{Ensemble, TimeGrid, Trajectory};
use crate::error::{Error, Result};

/// Distribution of `x_0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialDistribution {
    /// Independent `Uniform(lo_k, hi_k)` per component.
    Uniform { lo: Vec<f64>, hi: Vec<f64> },
    /// Trajectory `m` starts at `points[m % points.len()]`.
    Points { points: Vec<Vec<f64>> },
}

impl InitialDistribution {
    pub fn uniform(dim: usize, lo: f64, hi: f64) -> Self {
        Self::Uniform {
            lo: vec![lo; dim],
            hi: vec![hi; dim],
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            Self::Uniform { lo, hi } => {
                if lo.len() != dim || hi.len() != dim {
                    return Err(Error::invalid(format!(
                        "uniform initial bounds must have {dim} components"
                    )));
                }
                if lo
                    .iter()
                    .zip(hi)
                    .any(|(a, b)| !(a <= b) || !a.is_finite() || !b.is_finite())
                {
                    return Err(Error::invalid("uniform initial bounds need lo <= hi"));
                }
            }
            Self::Points { points } => {
                if points.is_empty() {
                    return Err(Error::invalid("initial point list is empty"));
                }
                if points
                    .iter()
                    .any(|p| p.len() != dim || p.iter().any(|v| !v.is_finite()))
                {
                    return Err(Error::invalid(format!(
                        "initial points must be finite with {dim} components"
                    )));
                }
            }
        }
        Ok(())
    }

    fn sample(&self, m: usize, rng: &mut impl Rng, out: &mut [f64]) {
        match self {
            Self::Uniform { lo, hi } => {
                for ((o, a), b) in out.iter_mut().zip(lo).zip(hi) {
                    let u: f64 = rng.random();
                    *o = a + (b - a) * u;
                }
            }
            Self::Points { points } => out.copy_from_slice(&points[m % points.len()]),
        }
    }
}

/// Random stream for trajectory `m`: independent of how trajectories are scheduled.
pub fn trajectory_rng(seed: u64, m: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(m as u64);
    rng
}

/// `out = x + fx·dt + increment`, shared by simulation and replay so both round identically.
#[inline]
pub(crate) fn advance(x: &[f64], fx: &[f64], dt: f64, increment: &[f64], out: &mut [f64]) {
    for k in 0..x.len() {
        out[k] = x[k] + fx[k] * dt + increment[k];
    }
}

/// One Euler–Maruyama step `x + f(x)·dt + C(x)·dw`, where `dw` is the raw
/// `N(0, dt·I)` draw and `C` the covariance factor.
pub fn em_step(
    x: &[f64],
    f: &dyn Drift,
    cov: &CovarianceModel,
    dt: f64,
    dw: &[f64],
) -> Result<Vec<f64>> {
    if !(dt > 0.0) {
        return Err(Error::invalid("dt must be positive"));
    }
    let d = x.len();
    if f.dim() != d || cov.dim() != d || dw.len() != d {
        return Err(Error::invalid("dimension mismatch in em_step"));
    }
    let mut fx = vec![0.0; d];
    let mut inc = vec![0.0; d];
    let mut out = vec![0.0; d];
    f.eval_into(x, &mut fx);
    cov.apply_factor(x, dw, &mut inc)?;
    advance(x, &fx, dt, &inc, &mut out);
    if out.iter().chain(&fx).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            trajectory: 0,
            step: 0,
        });
    }
    Ok(out)
}

fn simulate_one(
    m: usize,
    f: &dyn Drift,
    cov: &CovarianceModel,
    grid: &TimeGrid,
    init: &InitialDistribution,
    seed: u64,
    record_noise: bool,
) -> Result<Trajectory> {
    let d = f.dim();
    let len = grid.len();
    let mut rng = trajectory_rng(seed, m);
    let mut states = vec![0.0; len * d];
    let mut noise = record_noise.then(|| vec![0.0; (len - 1) * d]);
    init.sample(m, &mut rng, &mut states[..d]);

    let mut fx = vec![0.0; d];
    let mut dw = vec![0.0; d];
    let mut inc = vec![0.0; d];
    for l in 0..len - 1 {
        let dt = grid.dt(l);
        let sqrt_dt = dt.sqrt();
        for w in dw.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *w = z * sqrt_dt;
        }
        let (head, tail) = states.split_at_mut((l + 1) * d);
        let x = &head[l * d..];
        f.eval_into(x, &mut fx);
        cov.apply_factor(x, &dw, &mut inc)
            .map_err(|e| e.in_stage("covariance"))?;
        let next = &mut tail[..d];
        advance(x, &fx, dt, &inc, next);
        if next.iter().chain(&fx).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                trajectory: m,
                step: l,
            });
        }
        if let Some(n) = noise.as_mut() {
            n[l * d..(l + 1) * d].copy_from_slice(&inc);
        }
    }
    Ok(Trajectory::new(states, noise))
}

/// Simulates `count` independent trajectories on `grid`.
///
/// Trajectory `m` draws from its own ChaCha stream keyed by `(seed, m)`, so the
/// result does not depend on the rayon pool size.
pub fn simulate_ensemble(
    f: &dyn Drift,
    cov: &CovarianceModel,
    grid: &TimeGrid,
    count: usize,
    init: &InitialDistribution,
    seed: u64,
    record_noise: bool,
) -> Result<Ensemble> {
    let d = f.dim();
    if count == 0 {
        return Err(Error::invalid("need at least one trajectory"));
    }
    if cov.dim() != d {
        return Err(Error::invalid(format!(
            "covariance dimension {} does not match drift dimension {d}",
            cov.dim()
        )));
    }
    init.validate(d)?;
    let trajectories = (0..count)
        .into_par_iter()
        .map(|m| simulate_one(m, f, cov, grid, init, seed, record_noise))
        .collect::<Result<Vec<_>>>()?;
    Ensemble::new(grid.clone(), d, trajectories, Some(seed))
}

/// Constant noise level from quadratic variation,
/// `σ̂² = Σ‖x_{l+1} − x_l‖² / (M·T·d)`.
pub fn quadratic_variation_sigma(ens: &Ensemble) -> f64 {
    let d = ens.dim();
    let len = ens.grid().len();
    let sum: f64 = ens
        .trajectories()
        .iter()
        .map(|tr| {
            let s = tr.states();
            (0..len - 1)
                .map(|l| {
                    (0..d)
                        .map(|k| {
                            let dx = s[(l + 1) * d + k] - s[l * d + k];
                            dx * dx
                        })
                        .sum::<f64>()
                })
                .sum::<f64>()
        })
        .sum();
    let denom = ens.len() as f64 * ens.grid().t_end() * d as f64;
    (sum / denom).sqrt()
}
