//! Gaussian kernel properties on random rectangles.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use proptest::prelude::*;
use wcl_core::kernels::normal::{cdf, quantile, quantile_upper, sf};
use wcl_core::kernels::{
    bvn_cdf, bvn_rectangle, bvn_rho_derivative, exchangeable_rectangle, mvn_rectangle_small, QuadratureSpec,
    RectangleBounds,
};

/// A finite or infinite interval endpoint pair.
fn interval() -> impl Strategy<Value = (f64, f64)> {
    (-3.0..3.0f64, 0.05..3.0f64, 0..6u8).prop_map(|(l, w, tag)| match tag {
        0 => (f64::NEG_INFINITY, l),
        1 => (l, f64::INFINITY),
        _ => (l, l + w),
    })
}

fn bounds(m: usize) -> impl Strategy<Value = RectangleBounds> {
    prop::collection::vec(interval(), m).prop_map(|v| {
        let (lo, hi): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
        RectangleBounds::new(lo, hi).unwrap()
    })
}

fn exchangeable(m: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(m, m, |i, j| if i == j { 1.0 } else { rho })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn plackett_derivative_matches_differences(b in bounds(2), rho in -0.95..0.95f64) {
        let h = 1e-5;
        let fd = (bvn_rectangle(&b, rho + h).unwrap() - bvn_rectangle(&b, rho - h).unwrap()) / (2.0 * h);
        let an = bvn_rho_derivative(&b, rho).unwrap();
        prop_assert!((fd - an).abs() <= 1e-6, "fd {fd} analytic {an}");
    }

    #[test]
    fn rectangle_is_signed_corner_sum(b in bounds(2), rho in -0.99..0.99f64) {
        let (l, u) = (b.lower(), b.upper());
        let corners = bvn_cdf(u[0], u[1], rho) - bvn_cdf(l[0], u[1], rho) - bvn_cdf(u[0], l[1], rho)
            + bvn_cdf(l[0], l[1], rho);
        let p = bvn_rectangle(&b, rho).unwrap();
        prop_assert!((p - corners).abs() <= 1e-12);
        prop_assert!((0.0..=1.0).contains(&p));
    }

    #[test]
    fn independence_factorises(b in bounds(2)) {
        let p = bvn_rectangle(&b, 0.0).unwrap();
        let m: f64 = (0..2).map(|k| cdf(b.upper()[k]) - cdf(b.lower()[k])).product();
        prop_assert!((p - m).abs() <= 1e-14);
    }

    #[test]
    fn enlarging_a_side_never_lowers_mass(
        b in bounds(3),
        rho in 0.0..0.9f64,
        k in 0..3usize,
        grow in 0.0..2.0f64,
    ) {
        let r = exchangeable(3, rho);
        let mut hi = b.upper().to_vec();
        hi[k] += grow;
        let wider = RectangleBounds::new(b.lower().to_vec(), hi).unwrap();
        let p0 = mvn_rectangle_small(&b, &r).unwrap();
        let p1 = mvn_rectangle_small(&wider, &r).unwrap();
        prop_assert!(p1 >= p0 - 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn one_factor_integral_matches_exact_rectangles(
        m in 2..=4usize,
        seed in prop::collection::vec(interval(), 4),
        rho_idx in 0..4usize,
    ) {
        let rho = [0.1, 0.4, 0.7, 0.9][rho_idx];
        let (lo, hi): (Vec<f64>, Vec<f64>) = seed.into_iter().take(m).unzip();
        let b = RectangleBounds::new(lo, hi).unwrap();
        let one = exchangeable_rectangle(&b, rho, &QuadratureSpec::default()).unwrap();
        let exact = mvn_rectangle_small(&b, &exchangeable(m, rho)).unwrap();
        prop_assert!((one - exact).abs() <= 1e-8, "m={m} rho={rho}: {one} vs {exact}");
    }
}

#[test]
fn orthants_follow_arcsine_law() {
    for rho in [-0.9, -0.5, 0.0, 0.3, 0.5, 0.8, 0.99] {
        let want = 0.25 + f64::asin(rho) / (2.0 * PI);
        assert!((bvn_cdf(0.0, 0.0, rho) - want).abs() <= 1e-12, "rho={rho}");
        let b = RectangleBounds::lower_orthant(&[0.0, 0.0]);
        let d = bvn_rho_derivative(&b, rho).unwrap();
        assert!((d - 1.0 / (2.0 * PI * (1.0 - rho * rho).sqrt())).abs() <= 1e-12);
    }
    let r = exchangeable(3, 0.5);
    let p = mvn_rectangle_small(&RectangleBounds::lower_orthant(&[0.0; 3]), &r).unwrap();
    assert!((p - (0.125 + 3.0 * f64::asin(0.5) / (4.0 * PI))).abs() <= 1e-10);
}

#[test]
fn documented_values() {
    assert!((cdf(1.96) - 0.9750021048517795).abs() < 1e-14);
    assert_eq!(quantile(0.5), 0.0);
    assert_eq!(quantile(0.0), f64::NEG_INFINITY);
    assert_eq!(quantile(1.0), f64::INFINITY);
    for x in [-8.0, -3.3, -0.2, 0.0] {
        assert!((quantile(cdf(x)) - x).abs() <= 1e-12 * x.abs().max(1.0), "x={x}");
        // cdf rounds to 1 in the upper tail, so invert the upper tail there
        assert!((quantile_upper(sf(-x)) + x).abs() <= 1e-12 * x.abs().max(1.0), "x={x}");
    }
    let full = RectangleBounds::new(vec![f64::NEG_INFINITY; 2], vec![f64::INFINITY; 2]).unwrap();
    assert_eq!(bvn_rectangle(&full, 0.7).unwrap(), 1.0);
    assert_eq!(bvn_rho_derivative(&full, 0.3).unwrap(), 0.0);
    let five = RectangleBounds::lower_orthant(&[0.0; 5]);
    let p = exchangeable_rectangle(&five, 0.0, &QuadratureSpec::default()).unwrap();
    assert!((p - 0.03125).abs() < 1e-14);
    let p4 = mvn_rectangle_small(&RectangleBounds::lower_orthant(&[0.0; 4]), &DMatrix::identity(4, 4)).unwrap();
    assert!((p4 - 0.0625).abs() < 1e-14);
}

#[test]
fn domain_errors() {
    let b = RectangleBounds::lower_orthant(&[0.0, 0.0]);
    assert!(bvn_rectangle(&b, 1.0).is_err());
    assert!(bvn_rho_derivative(&b, -1.0).is_err());
    assert!(exchangeable_rectangle(&b, -0.1, &QuadratureSpec::default()).is_err());
    assert!(RectangleBounds::new(vec![1.0], vec![0.0]).is_err());
    assert!(RectangleBounds::new(vec![0.0], vec![1.0, 2.0]).is_err());
    let bad = DMatrix::from_row_slice(3, 3, &[1.0, 0.9, -0.9, 0.9, 1.0, 0.9, -0.9, 0.9, 1.0]);
    assert!(mvn_rectangle_small(&RectangleBounds::lower_orthant(&[0.0; 3]), &bad).is_err());
}
