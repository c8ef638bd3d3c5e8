use proptest::prelude::*;
use sdedrift::basis::{BasisFamily, BasisSet1D, Boundary, Domain, TensorBasis};

proptest! {
    #[test]
    fn bspline_is_a_local_partition_of_unity(
        lo in -10.0f64..10.0,
        width in 0.1f64..20.0,
        interior in 0usize..12,
        degree in 0usize..5,
        t in 0.0f64..=1.0,
    ) {
        let b = BasisSet1D::clamped_bspline(lo, lo + width, interior, degree).unwrap();
        prop_assert_eq!(b.size(), interior + degree + 1);
        let v = b.eval(lo + t * width);
        prop_assert!(v.iter().all(|&x| x >= 0.0));
        prop_assert!((v.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(v.iter().filter(|&&x| x != 0.0).count() <= degree + 1);
    }

    #[test]
    fn piecewise_polynomial_support(
        cells in 1usize..10,
        degree in 0usize..4,
        t in 0.001f64..0.999,
    ) {
        let b = BasisSet1D::piecewise_polynomial(-1.0, 3.0, cells, degree).unwrap();
        prop_assert_eq!(b.size(), cells * (degree + 1));
        let x = -1.0 + 4.0 * t;
        // skip the measure-zero breakpoints themselves
        let on_break = b.breakpoints().iter().any(|&k| (k - x).abs() < 1e-12);
        if !on_break {
            let mut idx = Vec::new();
            let mut val = Vec::new();
            b.eval_sparse(x, &mut idx, &mut val);
            prop_assert_eq!(idx.len(), degree + 1);
        }
    }

    #[test]
    fn tensor_evaluation_is_the_product_of_factors(
        x in prop::array::uniform3(-1.0f64..4.0),
        fam in prop_oneof![
            Just(BasisFamily::ClampedBspline),
            Just(BasisFamily::PiecewisePolynomial),
            Just(BasisFamily::Fourier),
        ],
    ) {
        let dom = Domain::new(vec![-1.0, 0.0, 0.5], vec![3.0, 4.0, 2.5]).unwrap();
        let tb = TensorBasis::on_domain(&dom, fam, 27, 2, Boundary::Clamp).unwrap();
        let full = tb.eval(&x);
        prop_assert_eq!(full.len(), tb.sizes().iter().product::<usize>());
        let per: Vec<Vec<f64>> = tb.factors().iter().zip(&x).map(|(b, &xi)| b.eval(xi)).collect();
        for (i, v) in full.iter().enumerate() {
            let multi = tb.multi_index(i);
            prop_assert_eq!(tb.flat_index(&multi), i);
            let p: f64 = multi.iter().enumerate().map(|(k, &j)| per[k][j]).product();
            prop_assert!((p - v).abs() <= 1e-12 * p.abs().max(1.0));
        }
    }
}

#[test]
fn size_formulas() {
    assert_eq!(BasisSet1D::fourier(0.0, 1.0, 4).unwrap().size(), 9);
    for (family, n, degree) in [
        (BasisFamily::ClampedBspline, 8, 2),
        (BasisFamily::ClampedBspline, 10, 2),
        (BasisFamily::PiecewisePolynomial, 12, 2),
        (BasisFamily::Fourier, 7, 0),
    ] {
        assert_eq!(
            BasisSet1D::with_size(family, 0.0, 10.0, n, degree)
                .unwrap()
                .size(),
            n
        );
    }
    let dom = Domain::new(vec![0.0, 0.0], vec![10.0, 10.0]).unwrap();
    let tb =
        TensorBasis::on_domain(&dom, BasisFamily::ClampedBspline, 36, 2, Boundary::Clamp).unwrap();
    assert_eq!(tb.sizes(), vec![6, 6]);
}
