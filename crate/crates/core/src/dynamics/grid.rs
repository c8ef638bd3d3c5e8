use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Strictly increasing observation times `0 = t_0 < … < t_{L-1} = T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::invalid("time grid needs at least 2 points"));
        }
        if times[0] != 0.0 {
            return Err(Error::invalid("time grid must start at 0"));
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("time grid contains non-finite values"));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("time grid must be strictly increasing"));
        }
        Ok(Self { times })
    }

    /// Uniform grid on `[0, t_end]` with step `dt`; `dt` must divide `t_end` within 1e-9.
    pub fn uniform(t_end: f64, dt: f64) -> Result<Self> {
        if !(t_end > 0.0) || !(dt > 0.0) || !t_end.is_finite() || !dt.is_finite() {
            return Err(Error::invalid("T and dt must be positive and finite"));
        }
        let ratio = t_end / dt;
        let steps = ratio.round();
        if steps < 1.0 || (ratio - steps).abs() > 1e-9 * steps.max(1.0) {
            return Err(Error::invalid(format!(
                "dt = {dt} does not divide T = {t_end}"
            )));
        }
        let steps = steps as usize;
        let times = (0..=steps)
            .map(|l| t_end * l as f64 / steps as f64)
            .collect();
        Self::new(times)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn t_end(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    /// `t_{l+1} - t_l`
    pub fn dt(&self, l: usize) -> f64 {
        self.times[l + 1] - self.times[l]
    }

    /// Grid index nearest to `t` (ties go to the earlier index).
    pub fn nearest_index(&self, t: f64) -> usize {
        let pos = self.times.partition_point(|&s| s < t);
        if pos == 0 {
            return 0;
        }
        if pos == self.times.len() {
            return self.times.len() - 1;
        }
        if (self.times[pos] - t) < (t - self.times[pos - 1]) {
            pos
        } else {
            pos - 1
        }
    }
}

/// One sampled path, stored row-major as `L × d` states.
///
/// `noise`, when present, holds the `L-1` realized increments `C(x_l)·Δw_l`
/// that were added to the state at each step.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    states: Vec<f64>,
    noise: Option<Vec<f64>>,
}

impl Trajectory {
    pub fn new(states: Vec<f64>, noise: Option<Vec<f64>>) -> Self {
        Self { states, noise }
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn noise(&self) -> Option<&[f64]> {
        self.noise.as_deref()
    }

    pub fn state(&self, l: usize, dim: usize) -> &[f64] {
        &self.states[l * dim..(l + 1) * dim]
    }

    /// Recorded noise for step `l → l + 1`; `None` without a record or past the last step.
    pub fn increment(&self, l: usize, dim: usize) -> Option<&[f64]> {
        self.noise
            .as_ref()
            .and_then(|n| n.get(l * dim..(l + 1) * dim))
    }

    pub fn into_parts(self) -> (Vec<f64>, Option<Vec<f64>>) {
        (self.states, self.noise)
    }
}

/// `M` trajectories on one shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    grid: TimeGrid,
    dim: usize,
    trajectories: Vec<Trajectory>,
    seed: Option<u64>,
}

impl Ensemble {
    pub fn new(
        grid: TimeGrid,
        dim: usize,
        trajectories: Vec<Trajectory>,
        seed: Option<u64>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("state dimension must be at least 1"));
        }
        if trajectories.is_empty() {
            return Err(Error::invalid("ensemble needs at least one trajectory"));
        }
        let len = grid.len();
        for (m, tr) in trajectories.iter().enumerate() {
            if tr.states.len() != len * dim {
                return Err(Error::invalid(format!(
                    "trajectory {m} has {} values, expected {}",
                    tr.states.len(),
                    len * dim
                )));
            }
            if let Some(n) = &tr.noise {
                if n.len() != (len - 1) * dim {
                    return Err(Error::invalid(format!(
                        "trajectory {m} noise has {} values, expected {}",
                        n.len(),
                        (len - 1) * dim
                    )));
                }
            }
        }
        Ok(Self {
            grid,
            dim,
            trajectories,
            seed,
        })
    }

    /// Builds an ensemble from per-trajectory lists of state vectors.
    pub fn from_states(grid: TimeGrid, states: &[Vec<Vec<f64>>]) -> Result<Self> {
        let dim = states
            .first()
            .and_then(|t| t.first())
            .map(Vec::len)
            .ok_or_else(|| Error::invalid("empty ensemble"))?;
        let mut trajectories = Vec::with_capacity(states.len());
        for path in states {
            if path.iter().any(|s| s.len() != dim) {
                return Err(Error::invalid("inconsistent state dimension"));
            }
            trajectories.push(Trajectory::new(path.concat(), None));
        }
        Self::new(grid, dim, trajectories, None)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn trajectory(&self, m: usize) -> &Trajectory {
        &self.trajectories[m]
    }

    pub fn has_noise(&self) -> bool {
        self.trajectories.iter().all(|t| t.noise.is_some())
    }

    /// All states of all trajectories, row-major `(M·L) × d`.
    pub fn pooled_states(&self) -> impl Iterator<Item = &[f64]> {
        self.trajectories
            .iter()
            .flat_map(move |t| t.states.chunks_exact(self.dim))
    }

    /// States of every trajectory at grid index `l`.
    pub fn snapshot(&self, l: usize) -> Vec<&[f64]> {
        self.trajectories
            .iter()
            .map(|t| t.state(l, self.dim))
            .collect()
    }

    pub fn without_noise(&self) -> Self {
        let trajectories = self
            .trajectories
            .iter()
            .map(|t| Trajectory::new(t.states.clone(), None))
            .collect();
        Self {
            trajectories,
            ..self.clone()
        }
    }
}
