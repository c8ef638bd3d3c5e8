use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisFamily {
    /// Shifted-scaled monomials `u^q`, `q = 0..=degree`, on each knot cell.
    PiecewisePolynomial,
    /// B-splines on a clamped knot vector (end knots repeated `degree + 1` times).
    ClampedBspline,
    /// `1, sin(2πhu), cos(2πhu)` for `h = 1..=degree`, `u` the interval coordinate.
    Fourier,
}

/// What evaluation does with points outside `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    /// Evaluate at the nearest endpoint.
    #[default]
    Clamp,
    /// All basis functions vanish outside the interval.
    Strict,
}

/// `n_intervals + 1` equally spaced points from `lo` to `hi`, endpoints exact.
pub fn uniform_knots(lo: f64, hi: f64, n_intervals: usize) -> Vec<f64> {
    let n = n_intervals.max(1);
    (0..=n)
        .map(|i| {
            if i == n {
                hi
            } else {
                lo + (hi - lo) * (i as f64 / n as f64)
            }
        })
        .collect()
}

/// A family of `size()` scalar functions on one interval.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSet1D {
    family: BasisFamily,
    /// Distinct knots `lo = b_0 < … < b_c = hi`; just `[lo, hi]` for Fourier.
    breakpoints: Vec<f64>,
    /// Polynomial degree, or harmonic count for Fourier.
    degree: usize,
    boundary: Boundary,
    /// Full clamped knot vector (B-spline only).
    knot_vector: Vec<f64>,
}

impl BasisSet1D {
    pub fn new(
        family: BasisFamily,
        breakpoints: Vec<f64>,
        degree: usize,
        boundary: Boundary,
    ) -> Result<Self> {
        if breakpoints.len() < 2 {
            return Err(Error::invalid("basis needs at least two knots"));
        }
        if breakpoints.iter().any(|b| !b.is_finite()) {
            return Err(Error::invalid("knots must be finite"));
        }
        if breakpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("knots must be strictly increasing"));
        }
        if family == BasisFamily::Fourier && breakpoints.len() != 2 {
            return Err(Error::invalid(
                "Fourier basis takes only the two interval endpoints",
            ));
        }
        let knot_vector = if family == BasisFamily::ClampedBspline {
            let (lo, hi) = (breakpoints[0], breakpoints[breakpoints.len() - 1]);
            let mut kv = vec![lo; degree + 1];
            kv.extend_from_slice(&breakpoints[1..breakpoints.len() - 1]);
            kv.extend(std::iter::repeat_n(hi, degree + 1));
            kv
        } else {
            Vec::new()
        };
        Ok(Self {
            family,
            breakpoints,
            degree,
            boundary,
            knot_vector,
        })
    }

    pub fn piecewise_polynomial(lo: f64, hi: f64, cells: usize, degree: usize) -> Result<Self> {
        if cells == 0 {
            return Err(Error::invalid("need at least one cell"));
        }
        Self::new(
            BasisFamily::PiecewisePolynomial,
            uniform_knots(lo, hi, cells),
            degree,
            Boundary::Clamp,
        )
    }

    pub fn clamped_bspline(lo: f64, hi: f64, interior_knots: usize, degree: usize) -> Result<Self> {
        Self::new(
            BasisFamily::ClampedBspline,
            uniform_knots(lo, hi, interior_knots + 1),
            degree,
            Boundary::Clamp,
        )
    }

    pub fn fourier(lo: f64, hi: f64, harmonics: usize) -> Result<Self> {
        Self::new(
            BasisFamily::Fourier,
            vec![lo, hi],
            harmonics,
            Boundary::Clamp,
        )
    }

    /// Uniform-knot basis of exactly `size` functions.
    ///
    /// Piecewise polynomials need `size` divisible by `degree + 1`; B-splines need
    /// `size ≥ degree + 1` (giving `size − degree − 1` interior knots); Fourier needs `size` odd.
    pub fn with_size(
        family: BasisFamily,
        lo: f64,
        hi: f64,
        size: usize,
        degree: usize,
    ) -> Result<Self> {
        match family {
            BasisFamily::PiecewisePolynomial => {
                if size == 0 || !size.is_multiple_of(degree + 1) {
                    return Err(Error::invalid(format!(
                        "piecewise polynomial of degree {degree} cannot have {size} functions \
                         (must be a multiple of {})",
                        degree + 1
                    )));
                }
                Self::piecewise_polynomial(lo, hi, size / (degree + 1), degree)
            }
            BasisFamily::ClampedBspline => {
                if size < degree + 1 {
                    return Err(Error::invalid(format!(
                        "clamped B-spline of degree {degree} needs at least {} functions",
                        degree + 1
                    )));
                }
                Self::clamped_bspline(lo, hi, size - degree - 1, degree)
            }
            BasisFamily::Fourier => {
                if size.is_multiple_of(2) {
                    return Err(Error::invalid("Fourier basis size must be odd"));
                }
                Self::fourier(lo, hi, size / 2)
            }
        }
    }

    pub fn with_boundary(mut self, boundary: Boundary) -> Self {
        self.boundary = boundary;
        self
    }

    pub fn family(&self) -> BasisFamily {
        self.family
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn clamped_knot_vector(&self) -> &[f64] {
        &self.knot_vector
    }

    pub fn lo(&self) -> f64 {
        self.breakpoints[0]
    }

    pub fn hi(&self) -> f64 {
        self.breakpoints[self.breakpoints.len() - 1]
    }

    fn cells(&self) -> usize {
        self.breakpoints.len() - 1
    }

    pub fn size(&self) -> usize {
        match self.family {
            BasisFamily::PiecewisePolynomial => self.cells() * (self.degree + 1),
            BasisFamily::ClampedBspline => self.cells() + self.degree,
            BasisFamily::Fourier => 1 + 2 * self.degree,
        }
    }

    /// Applies the boundary policy; `None` means every function is zero at `x`.
    fn locate(&self, x: f64) -> Option<f64> {
        let (lo, hi) = (self.lo(), self.hi());
        if x >= lo && x <= hi {
            return Some(x);
        }
        match self.boundary {
            Boundary::Clamp => Some(x.clamp(lo, hi)),
            Boundary::Strict => None,
        }
    }

    /// Appends the structurally nonzero `(index, value)` pairs at `x`.
    pub fn eval_sparse(&self, x: f64, idx: &mut Vec<usize>, val: &mut Vec<f64>) {
        let Some(x) = self.locate(x) else { return };
        match self.family {
            BasisFamily::PiecewisePolynomial => {
                let bp = &self.breakpoints;
                let cell = bp
                    .partition_point(|&b| b <= x)
                    .saturating_sub(1)
                    .min(self.cells() - 1);
                let u = (x - bp[cell]) / (bp[cell + 1] - bp[cell]);
                let base = cell * (self.degree + 1);
                let mut p = 1.0;
                for q in 0..=self.degree {
                    idx.push(base + q);
                    val.push(p);
                    p *= u;
                }
            }
            BasisFamily::ClampedBspline => {
                let mut n = [0.0; 16];
                let span = self.bspline_span(x);
                let nonzero = self.bspline_nonzero(span, x, &mut n);
                for (r, v) in nonzero.iter().enumerate() {
                    idx.push(span - self.degree + r);
                    val.push(*v);
                }
            }
            BasisFamily::Fourier => {
                let u = (x - self.lo()) / (self.hi() - self.lo());
                idx.push(0);
                val.push(1.0);
                for h in 1..=self.degree {
                    let (s, c) = (TAU * h as f64 * u).sin_cos();
                    idx.push(2 * h - 1);
                    val.push(s);
                    idx.push(2 * h);
                    val.push(c);
                }
            }
        }
    }

    /// All `size()` values at `x`.
    pub fn eval_into(&self, x: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        let mut idx = Vec::with_capacity(self.degree + 1);
        let mut val = Vec::with_capacity(self.degree + 1);
        self.eval_sparse(x, &mut idx, &mut val);
        for (i, v) in idx.into_iter().zip(val) {
            out[i] = v;
        }
    }

    pub fn eval(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.size()];
        self.eval_into(x, &mut out);
        out
    }

    /// Knot span `s` with `U[s] ≤ x < U[s+1]`; the right end maps to the last span.
    fn bspline_span(&self, x: f64) -> usize {
        let p = self.degree;
        let n = self.size();
        let u = &self.knot_vector;
        if x >= u[n] {
            return n - 1;
        }
        // search among U[p..=n]
        p + u[p..=n].partition_point(|&k| k <= x) - 1
    }

    /// The `degree + 1` functions nonzero on `span`, via the triangular recurrence.
    fn bspline_nonzero<'a>(&self, span: usize, x: f64, n: &'a mut [f64; 16]) -> &'a [f64] {
        let p = self.degree;
        assert!(p < 16, "B-spline degree above 15 is not supported");
        let u = &self.knot_vector;
        let mut left = [0.0; 16];
        let mut right = [0.0; 16];
        n[0] = 1.0;
        for j in 1..=p {
            left[j] = x - u[span + 1 - j];
            right[j] = u[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        &n[..=p]
    }
}
