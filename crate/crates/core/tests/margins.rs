//! Ordinal margin properties over random links, cutpoints and predictors.

use nalgebra::DMatrix;
use proptest::prelude::*;
use wcl_core::margins::{
    ordinal_expected_hessian, ordinal_pmf, ordinal_score, LinkFunction, ParameterVector, ShiftedCutpoints,
};

fn link() -> impl Strategy<Value = LinkFunction> {
    prop_oneof![Just(LinkFunction::Probit), Just(LinkFunction::Logit)]
}

/// Strictly increasing cutpoints, two to five of them.
fn cutpoints() -> impl Strategy<Value = Vec<f64>> {
    (-2.5..0.5f64, prop::collection::vec(0.1..1.5f64, 1..5)).prop_map(|(start, gaps)| {
        let mut g = vec![start];
        for d in gaps {
            g.push(g.last().unwrap() + d);
        }
        g
    })
}

fn log_lik(a: &ParameterVector, rows: &[(Vec<f64>, usize)], link: LinkFunction) -> f64 {
    rows.iter()
        .map(|(x, y)| ordinal_pmf(*y, &a.shifted(x), link).unwrap().ln())
        .sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn mass_is_one_and_score_has_zero_mean(link in link(), gamma in cutpoints(), nu in -2.0..2.0f64) {
        let sc = ShiftedCutpoints::new(&gamma, nu);
        let k = gamma.len() + 1;
        let mut mass = 0.0;
        let mut mean = vec![0.0; gamma.len()];
        for y in 1..=k {
            let f = ordinal_pmf(y, &sc, link).unwrap();
            prop_assert!(f > 0.0);
            mass += f;
            for (m, s) in mean.iter_mut().zip(ordinal_score(y, &sc, link).unwrap()) {
                *m += f * s;
            }
        }
        prop_assert!((mass - 1.0).abs() <= 1e-14);
        prop_assert!(mean.iter().all(|m| m.abs() <= 1e-12), "{mean:?}");
    }

    #[test]
    fn score_is_log_pmf_gradient(link in link(), gamma in cutpoints(), nu in -2.0..2.0f64, pick in 0..6usize) {
        let sc = ShiftedCutpoints::new(&gamma, nu);
        let y = 1 + pick % (gamma.len() + 1);
        let s = ordinal_score(y, &sc, link).unwrap();
        prop_assert!(s.iter().filter(|v| **v != 0.0).count() <= 2);
        let h = 1e-6;
        for m in 0..gamma.len() {
            let mut up = sc.0.clone();
            let mut dn = sc.0.clone();
            up[m] += h;
            dn[m] -= h;
            let fd = (ordinal_pmf(y, &ShiftedCutpoints(up), link).unwrap().ln()
                - ordinal_pmf(y, &ShiftedCutpoints(dn), link).unwrap().ln()) / (2.0 * h);
            prop_assert!((fd - s[m]).abs() <= 1e-7 * s[m].abs().max(1.0), "m={m}: {fd} vs {}", s[m]);
        }
    }

    #[test]
    fn expected_hessian_is_minus_score_covariance(link in link(), gamma in cutpoints(), nu in -2.0..2.0f64) {
        let sc = ShiftedCutpoints::new(&gamma, nu);
        let q = gamma.len();
        let mut cov = DMatrix::zeros(q, q);
        for y in 1..=q + 1 {
            let f = ordinal_pmf(y, &sc, link).unwrap();
            let s = nalgebra::DVector::from_vec(ordinal_score(y, &sc, link).unwrap());
            cov += f * &s * s.transpose();
        }
        let h = ordinal_expected_hessian(&sc, link).unwrap();
        prop_assert!((&h + &cov).abs().max() <= 1e-10);
        prop_assert!(h.symmetric_eigenvalues().max() < 0.0);
    }

    #[test]
    fn reversing_labels_mirrors_parameters(
        link in link(),
        gamma in cutpoints(),
        beta in prop::collection::vec(-1.5..1.5f64, 1..3),
        xs in prop::collection::vec(-1.0..1.0f64, 3),
    ) {
        let x: Vec<f64> = xs.into_iter().take(beta.len()).collect();
        let a = ParameterVector::new(beta.clone(), gamma.clone()).unwrap();
        let mirrored = ParameterVector::new(
            beta.iter().map(|b| -b).collect(),
            gamma.iter().rev().map(|g| -g).collect(),
        ).unwrap();
        let k = gamma.len() + 1;
        for y in 1..=k {
            let f = ordinal_pmf(y, &a.shifted(&x), link).unwrap();
            let g = ordinal_pmf(k + 1 - y, &mirrored.shifted(&x), link).unwrap();
            prop_assert!((f - g).abs() <= 1e-14);
        }
    }

    #[test]
    fn slope_gradient_factorises_through_design(
        link in link(),
        gamma in cutpoints(),
        beta in prop::collection::vec(-1.0..1.0f64, 2),
        rows in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64, 0..6usize), 1..6),
    ) {
        let a = ParameterVector::new(beta, gamma.clone()).unwrap();
        let k = gamma.len() + 1;
        let rows: Vec<(Vec<f64>, usize)> = rows.into_iter().map(|(u, v, c)| (vec![u, v], 1 + c % k)).collect();
        // X^T s with X^T = [x 1_q^T ; I_q]
        let mut grad = vec![0.0; a.r()];
        for (x, y) in &rows {
            let s = ordinal_score(*y, &a.shifted(x), link).unwrap();
            let total: f64 = s.iter().sum();
            grad[0] += x[0] * total;
            grad[1] += x[1] * total;
            for (m, v) in s.iter().enumerate() {
                grad[2 + m] += v;
            }
        }
        let h = 1e-6;
        let base = a.to_vec();
        for i in 0..base.len() {
            let mut up = base.clone();
            let mut dn = base.clone();
            up[i] += h;
            dn[i] -= h;
            let fd = (log_lik(&ParameterVector::from_slice(&up, 2), &rows, link)
                - log_lik(&ParameterVector::from_slice(&dn, 2), &rows, link)) / (2.0 * h);
            prop_assert!((fd - grad[i]).abs() <= 1e-7 * grad[i].abs().max(1.0), "i={i}: {fd} vs {}", grad[i]);
        }
    }
}

#[test]
fn documented_values() {
    let logit = LinkFunction::Logit;
    let sc = ShiftedCutpoints::new(&[0.33, 0.67], 0.0);
    let f: Vec<f64> = (1..=3).map(|y| ordinal_pmf(y, &sc, logit).unwrap()).collect();
    for (got, want) in f.iter().zip([0.581759, 0.079744, 0.338497]) {
        assert!((got - want).abs() < 5e-7);
    }
    let s = ordinal_score(2, &sc, logit).unwrap();
    assert!((s[0] + 3.051215).abs() < 5e-6 && (s[1] - 2.807952).abs() < 5e-6);

    let probit = LinkFunction::Probit;
    let half = ShiftedCutpoints::new(&[0.0], 0.0);
    assert_eq!(ordinal_pmf(1, &half, probit).unwrap(), 0.5);
    assert!((ordinal_score(1, &half, probit).unwrap()[0] - 0.7978846).abs() < 1e-7);
    assert!((ordinal_score(2, &half, probit).unwrap()[0] + 0.7978846).abs() < 1e-7);
    assert!((ordinal_expected_hessian(&half, probit).unwrap()[(0, 0)] + std::f64::consts::FRAC_2_PI).abs() < 1e-7);
    for link in [probit, logit] {
        assert_eq!(link.dpdf(0.0), 0.0);
    }
}

#[test]
fn invalid_inputs() {
    let sc = ShiftedCutpoints::new(&[0.0, 1.0], 0.0);
    assert!(ordinal_pmf(0, &sc, LinkFunction::Probit).is_err());
    assert!(ordinal_pmf(4, &sc, LinkFunction::Probit).is_err());
    assert!(ParameterVector::new(vec![], vec![0.5, 0.5]).is_err());
    assert!(ParameterVector::new(vec![], vec![]).is_err());
    let far = ShiftedCutpoints::new(&[60.0, 60.0 + 1e-12], 0.0);
    assert!(ordinal_score(2, &far, LinkFunction::Probit).is_err());
}
