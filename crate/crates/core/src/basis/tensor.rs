use super::domain::Domain;
use super::univariate::{BasisFamily, BasisSet1D, Boundary};
use crate::error::{Error, Result};

/// Products `ψ_i(x) = Π_k φ^{(k)}_{i_k}(x_k)` of one 1D family per dimension.
///
/// Flat indices are row-major over the multi-index: the last dimension varies fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorBasis {
    factors: Vec<BasisSet1D>,
    strides: Vec<usize>,
    len: usize,
}

/// Reusable buffers for [`TensorBasis::eval_sparse`].
#[derive(Debug, Default, Clone)]
pub struct TensorScratch {
    dim_idx: Vec<Vec<usize>>,
    dim_val: Vec<Vec<f64>>,
    counter: Vec<usize>,
    pub idx: Vec<usize>,
    pub val: Vec<f64>,
}

impl TensorBasis {
    pub fn new(factors: Vec<BasisSet1D>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::invalid("tensor basis needs at least one dimension"));
        }
        let mut strides = vec![1; factors.len()];
        for k in (0..factors.len() - 1).rev() {
            strides[k] = strides[k + 1] * factors[k + 1].size();
        }
        let len = strides[0] * factors[0].size();
        Ok(Self {
            factors,
            strides,
            len,
        })
    }

    /// Same family and degree in every dimension, `total_size` functions overall.
    ///
    /// `total_size` must be a perfect `d`-th power; each dimension gets its root.
    pub fn on_domain(
        domain: &Domain,
        family: BasisFamily,
        total_size: usize,
        degree: usize,
        boundary: Boundary,
    ) -> Result<Self> {
        let d = domain.dim();
        let per_dim = integer_root(total_size, d).ok_or_else(|| {
            Error::invalid(format!(
                "basis size {total_size} is not a perfect power of dimension {d}"
            ))
        })?;
        let factors = (0..d)
            .map(|k| {
                let (lo, hi) = domain.interval(k);
                BasisSet1D::with_size(family, lo, hi, per_dim, degree)
                    .map(|b| b.with_boundary(boundary))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(factors)
    }

    pub fn dim(&self) -> usize {
        self.factors.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn factors(&self) -> &[BasisSet1D] {
        &self.factors
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.factors.iter().map(BasisSet1D::size).collect()
    }

    pub fn multi_index(&self, flat: usize) -> Vec<usize> {
        self.strides
            .iter()
            .zip(&self.factors)
            .map(|(s, f)| (flat / s) % f.size())
            .collect()
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    /// Structurally nonzero `(index, value)` pairs at `x`, left in `scratch.idx/val`.
    pub fn eval_sparse(&self, x: &[f64], scratch: &mut TensorScratch) {
        let d = self.dim();
        scratch.dim_idx.resize_with(d, Vec::new);
        scratch.dim_val.resize_with(d, Vec::new);
        scratch.idx.clear();
        scratch.val.clear();
        for k in 0..d {
            scratch.dim_idx[k].clear();
            scratch.dim_val[k].clear();
            self.factors[k].eval_sparse(x[k], &mut scratch.dim_idx[k], &mut scratch.dim_val[k]);
            if scratch.dim_idx[k].is_empty() {
                return;
            }
        }
        // odometer over the per-dimension nonzero lists
        scratch.counter.clear();
        scratch.counter.resize(d, 0);
        loop {
            let mut flat = 0;
            let mut v = 1.0;
            for k in 0..d {
                let c = scratch.counter[k];
                flat += scratch.dim_idx[k][c] * self.strides[k];
                v *= scratch.dim_val[k][c];
            }
            scratch.idx.push(flat);
            scratch.val.push(v);
            let mut k = d;
            loop {
                if k == 0 {
                    return;
                }
                k -= 1;
                scratch.counter[k] += 1;
                if scratch.counter[k] < scratch.dim_idx[k].len() {
                    break;
                }
                scratch.counter[k] = 0;
            }
        }
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        let mut scratch = TensorScratch::default();
        out.iter_mut().for_each(|o| *o = 0.0);
        self.eval_sparse(x, &mut scratch);
        for (&i, &v) in scratch.idx.iter().zip(&scratch.val) {
            out[i] = v;
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len];
        self.eval_into(x, &mut out);
        out
    }
}

fn integer_root(n: usize, d: usize) -> Option<usize> {
    if d == 1 {
        return Some(n);
    }
    let guess = (n as f64).powf(1.0 / d as f64).round() as usize;
    (guess.saturating_sub(1)..=guess + 1).find(|r| r.checked_pow(d as u32) == Some(n))
}
