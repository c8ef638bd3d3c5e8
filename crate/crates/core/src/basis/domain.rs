use serde::{Deserialize, Serialize};

use crate::dynamics::Ensemble;
use crate::error::{Error, Result};

/// Axis-aligned box `Π [lo_k, hi_k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Domain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::invalid(
                "domain bounds must have equal nonzero length",
            ));
        }
        for (k, (a, b)) in lo.iter().zip(&hi).enumerate() {
            if !(a < b) || !a.is_finite() || !b.is_finite() {
                return Err(Error::DegenerateDomain { dim: k, value: *a });
            }
        }
        Ok(Self { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn interval(&self, k: usize) -> (f64, f64) {
        (self.lo[k], self.hi[k])
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }
}

/// Per-dimension `[min − pad·range, max + pad·range]` over every observed state.
pub fn build_domain(ens: &Ensemble, padding: f64) -> Result<Domain> {
    if !(padding >= 0.0) {
        return Err(Error::invalid("domain padding must be nonnegative"));
    }
    let d = ens.dim();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for x in ens.pooled_states() {
        for k in 0..d {
            lo[k] = lo[k].min(x[k]);
            hi[k] = hi[k].max(x[k]);
        }
    }
    for k in 0..d {
        if !(lo[k] < hi[k]) {
            return Err(Error::DegenerateDomain {
                dim: k,
                value: lo[k],
            });
        }
        let pad = padding * (hi[k] - lo[k]);
        lo[k] -= pad;
        hi[k] += pad;
    }
    Domain::new(lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::TimeGrid;

    fn ens(points: &[Vec<f64>]) -> Ensemble {
        let grid = TimeGrid::new((0..points.len()).map(|i| i as f64).collect()).unwrap();
        Ensemble::from_states(grid, &[points.to_vec()]).unwrap()
    }

    #[test]
    fn min_max() {
        let e = ens(&[vec![1.0], vec![3.0], vec![2.0]]);
        assert_eq!(build_domain(&e, 0.0).unwrap().interval(0), (1.0, 3.0));
    }

    #[test]
    fn componentwise() {
        let e = ens(&[vec![0.0, 5.0], vec![2.0, 1.0]]);
        let dom = build_domain(&e, 0.0).unwrap();
        assert_eq!(dom.interval(0), (0.0, 2.0));
        assert_eq!(dom.interval(1), (1.0, 5.0));
    }

    #[test]
    fn padded() {
        let e = ens(&[vec![1.0], vec![3.0]]);
        let (lo, hi) = build_domain(&e, 0.05).unwrap().interval(0);
        assert!((lo - 0.9).abs() < 1e-15 && (hi - 3.1).abs() < 1e-15);
    }

    #[test]
    fn degenerate() {
        let e = ens(&[vec![1.0, 2.0], vec![3.0, 2.0]]);
        assert!(matches!(
            build_domain(&e, 0.0),
            Err(Error::DegenerateDomain { dim: 1, .. })
        ));
    }
}
