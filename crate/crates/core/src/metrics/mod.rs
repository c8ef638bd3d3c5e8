//! Scores for a fitted drift: relative `L²(ρ)` error against the truth,
//! paired-noise trajectory error, and Wasserstein distances between snapshots.

mod wasserstein;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{advance, Drift, Ensemble, Trajectory};
use crate::error::{Error, Result};

pub use wasserstein::{sliced_wasserstein, wasserstein_1d, PROJECTION_SEED, SLICED_PROJECTIONS};

/// The empirical occupation measure: every observed state, equally weighted.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupationSample {
    dim: usize,
    states: Vec<f64>,
}

impl OccupationSample {
    pub fn new(dim: usize, states: Vec<f64>) -> Result<Self> {
        if dim == 0 || states.is_empty() || !states.len().is_multiple_of(dim) {
            return Err(Error::invalid(
                "occupation sample must be a nonempty list of states",
            ));
        }
        Ok(Self { dim, states })
    }

    pub fn from_ensemble(ens: &Ensemble) -> Self {
        let states = ens
            .trajectories()
            .iter()
            .flat_map(|t| t.states().iter().copied())
            .collect();
        Self {
            dim: ens.dim(),
            states,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.states.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.states.chunks_exact(self.dim)
    }

    /// Per-dimension `[q, 1 − q]` quantile bounds with `q = (1 − mass)/2`.
    pub fn central_bounds(&self, mass: f64) -> Vec<(f64, f64)> {
        let q = ((1.0 - mass) / 2.0).clamp(0.0, 0.5);
        (0..self.dim)
            .map(|k| {
                let mut v: Vec<f64> = self.iter().map(|x| x[k]).collect();
                v.sort_by(f64::total_cmp);
                let last = (v.len() - 1) as f64;
                let lo = v[(q * last).round() as usize];
                let hi = v[((1.0 - q) * last).round() as usize];
                (lo, hi)
            })
            .collect()
    }

    /// States that fall inside every per-dimension central quantile range.
    pub fn central(&self, mass: f64) -> Result<Self> {
        let bounds = self.central_bounds(mass);
        let states: Vec<f64> = self
            .iter()
            .filter(|x| {
                x.iter()
                    .zip(&bounds)
                    .all(|(v, (lo, hi))| v >= lo && v <= hi)
            })
            .flat_map(|x| x.iter().copied())
            .collect();
        Self::new(self.dim, states)
    }
}

/// `sqrt(Σ‖f(x) − f̂(x)‖² / Σ‖f(x)‖²)` over the occupation sample.
pub fn l2_rho_error(f_true: &dyn Drift, f_hat: &dyn Drift, occ: &OccupationSample) -> Result<f64> {
    if f_true.dim() != occ.dim() || f_hat.dim() != occ.dim() {
        return Err(Error::invalid(
            "drift dimension does not match occupation sample",
        ));
    }
    let d = occ.dim();
    let mut ft = vec![0.0; d];
    let mut fh = vec![0.0; d];
    let (mut num, mut den) = (0.0, 0.0);
    for x in occ.iter() {
        f_true.eval_into(x, &mut ft);
        f_hat.eval_into(x, &mut fh);
        for k in 0..d {
            num += (ft[k] - fh[k]).powi(2);
            den += ft[k] * ft[k];
        }
    }
    if den == 0.0 {
        return Err(Error::ZeroTruthNorm {
            absolute: (num / occ.len() as f64).sqrt(),
        });
    }
    Ok((num / den).sqrt())
}

/// Re-integrates `f_hat` from each recorded `x_0` using the recorded increments.
pub fn replay_trajectories(f_hat: &dyn Drift, ens: &Ensemble) -> Result<Ensemble> {
    let d = ens.dim();
    if f_hat.dim() != d {
        return Err(Error::invalid("drift dimension does not match ensemble"));
    }
    let grid = ens.grid();
    let len = grid.len();
    let trajectories = ens
        .trajectories()
        .par_iter()
        .enumerate()
        .map(|(m, tr)| {
            let noise = tr.noise().ok_or(Error::MissingNoise { trajectory: m })?;
            let mut states = vec![0.0; len * d];
            states[..d].copy_from_slice(tr.state(0, d));
            let mut fx = vec![0.0; d];
            for l in 0..len - 1 {
                let (head, tail) = states.split_at_mut((l + 1) * d);
                let x = &head[l * d..];
                f_hat.eval_into(x, &mut fx);
                let next = &mut tail[..d];
                advance(x, &fx, grid.dt(l), &noise[l * d..(l + 1) * d], next);
                if next.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite {
                        trajectory: m,
                        step: l,
                    });
                }
            }
            Ok(Trajectory::new(states, Some(noise.to_vec())))
        })
        .collect::<Result<Vec<_>>>()?;
    Ensemble::new(grid.clone(), d, trajectories, ens.seed())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryError {
    pub mean: f64,
    /// Population standard deviation over trajectories.
    pub std: f64,
    /// Trajectories with `Σ_l ‖x_l‖² = 0`, left out of the statistics.
    pub skipped: Vec<usize>,
}

/// Per-trajectory `Σ_l‖x_l − x̂_l‖² / Σ_l‖x_l‖²`, summarized as mean and std.
pub fn trajectory_error(ens: &Ensemble, ens_hat: &Ensemble) -> Result<TrajectoryError> {
    if ens.len() != ens_hat.len() || ens.dim() != ens_hat.dim() || ens.grid() != ens_hat.grid() {
        return Err(Error::invalid(
            "ensembles differ in size, dimension or grid",
        ));
    }
    let mut errors = Vec::with_capacity(ens.len());
    let mut skipped = Vec::new();
    for (m, (a, b)) in ens
        .trajectories()
        .iter()
        .zip(ens_hat.trajectories())
        .enumerate()
    {
        let num: f64 = a
            .states()
            .iter()
            .zip(b.states())
            .map(|(x, y)| (x - y).powi(2))
            .sum();
        let den: f64 = a.states().iter().map(|x| x * x).sum();
        if den == 0.0 {
            skipped.push(m);
        } else {
            errors.push(num / den);
        }
    }
    if errors.is_empty() {
        return Err(Error::invalid("every trajectory has zero norm"));
    }
    let n = errors.len() as f64;
    let mean = errors.iter().sum::<f64>() / n;
    let var = errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
    Ok(TrajectoryError {
        mean,
        std: var.sqrt(),
        skipped,
    })
}

/// `W₁` between the two ensembles at the grid point nearest `t`.
///
/// Exact in 1D; sliced with [`SLICED_PROJECTIONS`] seeded directions otherwise.
pub fn wasserstein_snapshot(ens: &Ensemble, ens_hat: &Ensemble, t: f64) -> Result<f64> {
    if ens.dim() != ens_hat.dim() {
        return Err(Error::invalid("ensembles differ in dimension"));
    }
    let la = ens.grid().nearest_index(t);
    let lb = ens_hat.grid().nearest_index(t);
    let a = ens.snapshot(la);
    let b = ens_hat.snapshot(lb);
    Ok(sliced_wasserstein(
        &a,
        &b,
        ens.dim(),
        SLICED_PROJECTIONS,
        PROJECTION_SEED,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotDistance {
    pub t: f64,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// `None` when the true drift vanishes on the sample; see `absolute_l2_rho`.
    pub relative_l2_rho: Option<f64>,
    pub absolute_l2_rho: Option<f64>,
    pub trajectory_error_mean: f64,
    pub trajectory_error_std: f64,
    pub skipped_trajectories: Vec<usize>,
    pub wasserstein: Vec<SnapshotDistance>,
}

/// All three scores. `ens` must carry noise records for the replay.
pub fn evaluate(
    f_true: &dyn Drift,
    f_hat: &dyn Drift,
    ens: &Ensemble,
    snapshot_times: &[f64],
) -> Result<(MetricReport, Ensemble)> {
    let occ = OccupationSample::from_ensemble(ens);
    let (relative, absolute) = match l2_rho_error(f_true, f_hat, &occ) {
        Ok(v) => (Some(v), None),
        Err(Error::ZeroTruthNorm { absolute }) => (None, Some(absolute)),
        Err(e) => return Err(e),
    };
    let replay = replay_trajectories(f_hat, ens)?;
    let traj = trajectory_error(ens, &replay)?;
    let wasserstein = snapshot_times
        .iter()
        .map(|&t| {
            wasserstein_snapshot(ens, &replay, t).map(|distance| SnapshotDistance { t, distance })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((
        MetricReport {
            relative_l2_rho: relative,
            absolute_l2_rho: absolute,
            trajectory_error_mean: traj.mean,
            trajectory_error_std: traj.std,
            skipped_trajectories: traj.skipped,
            wasserstein,
        },
        replay,
    ))
}
