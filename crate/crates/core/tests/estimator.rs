use std::sync::Arc;

use proptest::prelude::*;
use sdedrift::basis::{build_domain, BasisFamily, Boundary, Domain, TensorBasis};
use sdedrift::dynamics::{
    simulate_ensemble, ConstantDrift, CovarianceModel, Drift, Ensemble, FnDrift,
    InitialDistribution, TimeGrid,
};
use sdedrift::estimator::{
    assemble_diagonal_system, empirical_loss, fit_basis_drift, fit_general,
    loss_gradient_coefficients, solve_system, CoefficientMatrix, Method, OptimizerConfig,
    QuadraticObjective,
};

fn poly_2d(m: usize, cov: &CovarianceModel, seed: u64) -> Ensemble {
    let f = FnDrift::new(2, |x: &[f64], o: &mut [f64]| {
        o[0] = 0.4 * x[0] - 0.1 * x[0] * x[1];
        o[1] = -0.8 * x[1] + 0.2 * x[0] * x[0];
    });
    let grid = TimeGrid::uniform(0.5, 0.005).unwrap();
    simulate_ensemble(
        &f,
        cov,
        &grid,
        m,
        &InitialDistribution::uniform(2, 0.0, 3.0),
        seed,
        false,
    )
    .unwrap()
}

fn nested(ens: &Ensemble) -> Vec<Vec<Vec<f64>>> {
    let d = ens.dim();
    ens.trajectories()
        .iter()
        .map(|tr| tr.states().chunks(d).map(<[f64]>::to_vec).collect())
        .collect()
}

fn basis(ens: &Ensemble, n: usize) -> TensorBasis {
    let dom = build_domain(ens, 0.0).unwrap();
    TensorBasis::on_domain(&dom, BasisFamily::ClampedBspline, n, 2, Boundary::Clamp).unwrap()
}

#[test]
fn closed_form_zeroes_the_gradient() {
    let cov = CovarianceModel::diagonal(vec![0.6, 0.8]).unwrap();
    let ens = poly_2d(200, &cov, 1);
    let tb = basis(&ens, 16);
    let fit = solve_system(&assemble_diagonal_system(&ens, &tb, &cov).unwrap(), 0.0).unwrap();
    let g = loss_gradient_coefficients(&fit, &ens, &cov).unwrap();
    let g0 = loss_gradient_coefficients(&CoefficientMatrix::zeros(tb, 2), &ens, &cov).unwrap();
    let scale = g0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let worst = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(worst <= 1e-8 * scale, "{worst} vs {scale}");
}

#[test]
fn constant_drift_is_recovered() {
    let cov = CovarianceModel::scalar(1, 0.6).unwrap();
    let grid = TimeGrid::uniform(1.0, 0.001).unwrap();
    let ens = simulate_ensemble(
        &ConstantDrift(vec![1.25]),
        &cov,
        &grid,
        2000,
        &InitialDistribution::uniform(1, 0.0, 10.0),
        4,
        false,
    )
    .unwrap();
    // a single constant function isolates the normalization
    let dom = build_domain(&ens, 0.0).unwrap();
    let tb = TensorBasis::on_domain(
        &dom,
        BasisFamily::PiecewisePolynomial,
        1,
        0,
        Boundary::Clamp,
    )
    .unwrap();
    let fit = fit_basis_drift(&ens, &tb, &cov, 0.0).unwrap();
    let est = fit.eval(&[5.0])[0];
    // standard error of the mean increment rate is sqrt(0.6 / (M·T))
    assert!(
        (est - 1.25).abs() <= 4.0 * (0.6f64 / 2000.0).sqrt(),
        "{est}"
    );
}

#[test]
fn full_covariance_beats_its_diagonal_approximation() {
    // with a constant D and a shared basis the two optima coincide, so D varies with x
    let field = |x: &[f64], out: &mut [f64]| {
        let c = 0.25 * (0.5 * x[0]).sin();
        out.copy_from_slice(&[0.6 + 0.2 * (0.7 * x[1]).cos(), c, c, 0.8]);
    };
    let cov = CovarianceModel::full_fn(2, Arc::new(field)).unwrap();
    let ens = poly_2d(200, &cov, 2);
    let tb = basis(&ens, 9);
    let diag = fit_basis_drift(&ens, &tb, &cov.diagonal_part().unwrap(), 0.0).unwrap();
    let lambda = QuadraticObjective::assemble(&ens, &tb, &cov)
        .unwrap()
        .max_curvature(200);
    let opt = OptimizerConfig {
        method: Method::GradientDescent,
        step_size: 1.0 / lambda,
        max_iterations: 100_000,
        tolerance: 0.0,
        seed: 0,
    };
    let full = fit_general(&ens, &tb, &cov, &opt).unwrap();
    let l_full = empirical_loss(&full.coefficients, &ens, &cov).unwrap();
    let l_diag = empirical_loss(&diag, &ens, &cov).unwrap();
    assert!(l_full < l_diag, "{l_full} >= {l_diag}");
    assert!((full.report.final_loss - l_full).abs() <= 1e-9 * l_full.abs().max(1.0));
}

#[test]
fn decoupling_under_diagonal_covariance() {
    let cov = CovarianceModel::diagonal(vec![0.6, 0.8]).unwrap();
    let ens = poly_2d(40, &cov, 3);
    // fixed domain, so the basis does not move with the data
    let dom = Domain::new(vec![-2.0, -2.0], vec![6.0, 6.0]).unwrap();
    let tb =
        TensorBasis::on_domain(&dom, BasisFamily::ClampedBspline, 16, 2, Boundary::Clamp).unwrap();
    let base = fit_basis_drift(&ens, &tb, &cov, 0.0).unwrap();
    for k in 0..2 {
        let mut states = nested(&ens);
        // final states never serve as regressors, only as increment endpoints
        for (m, tr) in states.iter_mut().enumerate() {
            tr.last_mut().unwrap()[k] += 0.1 * (m as f64 + 1.0);
        }
        let moved = Ensemble::from_states(ens.grid().clone(), &states).unwrap();
        let fit = fit_basis_drift(&moved, &tb, &cov, 0.0).unwrap();
        for j in 0..2 {
            let diff = base
                .column(j)
                .iter()
                .zip(fit.column(j))
                .fold(0.0f64, |a, (u, v)| a.max((u - v).abs()));
            if j == k {
                assert!(diff > 1e-6, "column {j} should move");
            } else {
                assert!(diff <= 1e-10, "column {j} moved by {diff}");
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn loss_is_a_parabola_along_lines(
        seed in 0u64..1000,
        a0 in prop::collection::vec(-2.0f64..2.0, 18),
        v in prop::collection::vec(-1.0f64..1.0, 18),
        full in any::<bool>(),
    ) {
        let cov = if full {
            CovarianceModel::full(2, vec![0.6, 0.2, 0.2, 0.8]).unwrap()
        } else {
            CovarianceModel::diagonal(vec![0.6, 0.8]).unwrap()
        };
        let ens = poly_2d(8, &cov, seed);
        let tb = basis(&ens, 9);
        let at = |s: f64| {
            let a: Vec<f64> = a0.iter().zip(&v).map(|(a, v)| a + s * v).collect();
            empirical_loss(&CoefficientMatrix::new(tb.clone(), 2, a).unwrap(), &ens, &cov).unwrap()
        };
        let (l0, l1, l2) = (at(0.0), at(1.0), at(2.0));
        for s in [-1.5, 0.5, 3.0] {
            // Lagrange interpolation through s = 0, 1, 2
            let p = l0 * (s - 1.0) * (s - 2.0) / 2.0 - l1 * s * (s - 2.0) + l2 * s * (s - 1.0) / 2.0;
            let scale = l0.abs().max(l1.abs()).max(l2.abs()).max(1.0);
            prop_assert!((at(s) - p).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn fit_ignores_covariance_scale(seed in 0u64..1000, c in 0.01f64..100.0) {
        let cov = CovarianceModel::diagonal(vec![0.6, 0.8]).unwrap();
        let ens = poly_2d(10, &cov, seed);
        let tb = basis(&ens, 9);
        let a = fit_basis_drift(&ens, &tb, &cov, 0.0).unwrap();
        let b = fit_basis_drift(&ens, &tb, &cov.scaled(c).unwrap(), 0.0).unwrap();
        let scale = a.values().iter().fold(1.0f64, |m, v| m.max(v.abs()));
        prop_assert!(a.max_abs_diff(&b) <= 1e-10 * scale);
    }
}
