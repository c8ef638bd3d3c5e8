use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sdedrift::basis::{build_domain, BasisFamily, Boundary, TensorBasis};
use sdedrift::dynamics::{Drift, FnDrift};
use sdedrift::estimator::CoefficientMatrix;
use sdedrift::harness::{preset, simulate};
use sdedrift::metrics::{
    l2_rho_error, replay_trajectories, sliced_wasserstein, trajectory_error, OccupationSample,
    PROJECTION_SEED,
};

fn affine(a: [f64; 4]) -> impl Drift {
    FnDrift::new(2, move |x: &[f64], o: &mut [f64]| {
        o[0] = a[0] + a[1] * x[1];
        o[1] = a[2] - a[3] * x[0];
    })
}

fn scaled<D: Drift>(f: D, c: f64) -> impl Drift {
    FnDrift::new(f.dim(), move |x: &[f64], o: &mut [f64]| {
        f.eval_into(x, o);
        o.iter_mut().for_each(|v| *v *= c);
    })
}

#[test]
fn degradation_is_monotone_in_the_perturbation() {
    let mut cfg = preset("sine-cos-1d").unwrap().config();
    cfg.trajectories = 200;
    let ens = simulate(&cfg).unwrap();
    let f = cfg.drift_function().unwrap();
    assert_eq!(
        trajectory_error(&ens, &replay_trajectories(&f, &ens).unwrap())
            .unwrap()
            .mean,
        0.0
    );

    let dom = build_domain(&ens, 0.0).unwrap();
    let tb =
        TensorBasis::on_domain(&dom, BasisFamily::ClampedBspline, 8, 2, Boundary::Clamp).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let direction =
        CoefficientMatrix::new(tb, 1, (0..8).map(|_| rng.random_range(-1.0..1.0)).collect())
            .unwrap();
    let mut last = 0.0;
    for eps in [1e-3, 3e-3, 1e-2, 3e-2, 0.1, 0.3] {
        let d = direction.clone();
        let f = f.clone();
        let perturbed = FnDrift::new(1, move |x: &[f64], o: &mut [f64]| {
            o[0] = f.eval(x)[0] + eps * d.eval(x)[0];
        });
        let err = trajectory_error(&ens, &replay_trajectories(&perturbed, &ens).unwrap())
            .unwrap()
            .mean;
        assert!(err > last, "eps {eps}: {err} <= {last}");
        last = err;
    }
}

proptest! {
    #[test]
    fn relative_l2_properties(
        a in prop::array::uniform4(-2.0f64..2.0),
        b in prop::array::uniform4(-2.0f64..2.0),
        c in prop_oneof![-10.0f64..-0.1, 0.1f64..10.0],
        states in prop::collection::vec(-5.0f64..5.0, 2..40),
    ) {
        let states = if states.len() % 2 == 1 { states[1..].to_vec() } else { states };
        let occ = OccupationSample::new(2, states).unwrap();
        let (f, g) = (affine(a), affine(b));
        if let Ok(e) = l2_rho_error(&f, &f, &occ) {
            prop_assert_eq!(e, 0.0);
        }
        if let Ok(e) = l2_rho_error(&f, &g, &occ) {
            prop_assert!(e >= 0.0);
            let s = l2_rho_error(&scaled(affine(a), c), &scaled(affine(b), c), &occ).unwrap();
            prop_assert!((s - e).abs() <= 1e-12 * e.max(1.0));
            // the numerator is symmetric: swapping roles rescales only by the truth norms
            let back = l2_rho_error(&g, &f, &occ);
            if let Ok(back) = back {
                let norm = |h: &dyn Drift| occ.iter().map(|x| h.eval(x).iter().map(|v| v * v).sum::<f64>()).sum::<f64>().sqrt();
                prop_assert!((e * norm(&f) - back * norm(&g)).abs() <= 1e-9 * (e * norm(&f)).max(1e-300));
            }
        }
    }

    #[test]
    fn sliced_distance_is_order_free(
        pts in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 2..30),
        shift in 0usize..30,
    ) {
        let a: Vec<[f64; 2]> = pts.iter().map(|&(x, y)| [x, y]).collect();
        let b: Vec<[f64; 2]> = pts.iter().map(|&(x, y)| [y + 0.5, x]).collect();
        let mut rotated = b.clone();
        rotated.rotate_left(shift % b.len());
        let w = |u: &[[f64; 2]], v: &[[f64; 2]]| {
            let u: Vec<&[f64]> = u.iter().map(|p| &p[..]).collect();
            let v: Vec<&[f64]> = v.iter().map(|p| &p[..]).collect();
            sliced_wasserstein(&u, &v, 2, 64, PROJECTION_SEED)
        };
        let (d1, d2, d3) = (w(&a, &b), w(&a, &rotated), w(&a, &b));
        prop_assert!((d1 - d2).abs() <= 1e-12);
        prop_assert_eq!(d1, d3);
    }
}
