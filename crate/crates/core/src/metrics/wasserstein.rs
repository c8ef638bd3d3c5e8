//! Order-1 Wasserstein distances between equally weighted empirical samples.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Exact `W₁` in one dimension.
///
/// Equal sizes use the sorted-sample mean absolute difference; otherwise the
/// integral of `|F_a − F_b|` over the merged support.
pub fn wasserstein_1d(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let sa = sorted(a);
    let sb = sorted(b);
    if sa.len() == sb.len() {
        return sa.iter().zip(&sb).map(|(x, y)| (x - y).abs()).sum::<f64>() / sa.len() as f64;
    }
    let (na, nb) = (sa.len() as f64, sb.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut total = 0.0;
    let mut prev = sa[0].min(sb[0]);
    while i < sa.len() || j < sb.len() {
        let next = match (sa.get(i), sb.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        let fa = i as f64 / na;
        let fb = j as f64 / nb;
        total += (fa - fb).abs() * (next - prev);
        while i < sa.len() && sa[i] == next {
            i += 1;
        }
        while j < sb.len() && sb[j] == next {
            j += 1;
        }
        prev = next;
    }
    total
}

/// Number of random directions used by [`sliced_wasserstein`] in metric reports.
pub const SLICED_PROJECTIONS: usize = 64;
/// Direction seed used in metric reports.
pub const PROJECTION_SEED: u64 = 0x5eed;

/// Sliced `W₁`: the mean of exact 1D distances along `projections` random
/// unit directions drawn from `seed`. Points are rows of length `dim`.
pub fn sliced_wasserstein(
    a: &[&[f64]],
    b: &[&[f64]],
    dim: usize,
    projections: usize,
    seed: u64,
) -> f64 {
    if dim == 1 {
        let pa: Vec<f64> = a.iter().map(|x| x[0]).collect();
        let pb: Vec<f64> = b.iter().map(|x| x[0]).collect();
        return wasserstein_1d(&pa, &pb);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    let mut dir = vec![0.0; dim];
    for _ in 0..projections {
        loop {
            dir.iter_mut()
                .for_each(|v| *v = StandardNormal.sample(&mut rng));
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1e-12 {
                dir.iter_mut().for_each(|v| *v /= norm);
                break;
            }
        }
        let project = |x: &&[f64]| x.iter().zip(&dir).map(|(u, v)| u * v).sum::<f64>();
        let pa: Vec<f64> = a.iter().map(project).collect();
        let pb: Vec<f64> = b.iter().map(project).collect();
        total += wasserstein_1d(&pa, &pb);
    }
    total / projections as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn basic_values() {
        assert_eq!(wasserstein_1d(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0]), 0.0);
        assert_eq!(wasserstein_1d(&[0.0, 1.0], &[0.0, 2.0]), 0.5);
        let a = [0.3, -1.2, 4.0];
        let b: Vec<f64> = a.iter().map(|x| x + 0.75).collect();
        assert!((wasserstein_1d(&a, &b) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn unequal_sizes() {
        // {0} vs {0, 1}: half the mass moves distance 1
        assert!((wasserstein_1d(&[0.0], &[0.0, 1.0]) - 0.5).abs() < 1e-15);
        // {0, 0, 3} vs {1}: (1 + 1 + 2)/3
        assert!((wasserstein_1d(&[0.0, 0.0, 3.0], &[1.0]) - 4.0 / 3.0).abs() < 1e-15);
        // agrees with the equal-size formula after replication
        let a = [0.1, 0.9];
        let b = [0.2, 0.4, 0.5, 1.5];
        let a2 = [0.1, 0.1, 0.9, 0.9];
        assert!((wasserstein_1d(&a, &b) - wasserstein_1d(&a2, &b)).abs() < 1e-15);
    }

    #[test]
    fn sliced_is_order_invariant_and_seeded() {
        let pts: Vec<Vec<f64>> = (0..20)
            .map(|i| vec![i as f64 * 0.1, (i as f64).sin()])
            .collect();
        let other: Vec<Vec<f64>> = pts.iter().map(|p| vec![p[0] + 0.3, p[1] * 1.1]).collect();
        let a: Vec<&[f64]> = pts.iter().map(Vec::as_slice).collect();
        let b: Vec<&[f64]> = other.iter().map(Vec::as_slice).collect();
        let mut b_rev = b.clone();
        b_rev.reverse();
        let d1 = sliced_wasserstein(&a, &b, 2, 64, 1);
        assert_eq!(d1, sliced_wasserstein(&a, &b_rev, 2, 64, 1));
        assert_eq!(d1, sliced_wasserstein(&a, &b, 2, 64, 1));
        assert!(d1 > 0.0);
        assert_eq!(sliced_wasserstein(&a, &a, 2, 64, 1), 0.0);
    }

    proptest! {
        #[test]
        fn metric_axioms(a in proptest::collection::vec(-10.0f64..10.0, 1..12),
                         b in proptest::collection::vec(-10.0f64..10.0, 1..12),
                         c in proptest::collection::vec(-10.0f64..10.0, 1..12)) {
            let ab = wasserstein_1d(&a, &b);
            prop_assert!(ab >= 0.0);
            prop_assert!((ab - wasserstein_1d(&b, &a)).abs() < 1e-12);
            let bc = wasserstein_1d(&b, &c);
            let ac = wasserstein_1d(&a, &c);
            prop_assert!(ac <= ab + bc + 1e-12);
        }
    }
}
