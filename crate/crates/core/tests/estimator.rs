//! Two-stage estimator behaviour on small synthetic datasets.

use wcl_core::estimator::{
    compute_optimal_weights, fit_cl, fit_wcl, fit_wcl_with_cl, sandwich_covariance, solve_stage1, FitOptions, Method,
};
use wcl_core::kernels::normal::quantile;
use wcl_core::margins::{LinkFunction, ParameterVector};
use wcl_core::model::{ClusterData, CorrelationKind, CorrelationModel};
use wcl_core::scores::WeightSet;
use wcl_core::sim::{sample_ordinal_mvn, DesignKind, SimDesign};
use wcl_core::WclError;

fn custom(d: usize, n: usize, corr: CorrelationModel, seed: u64) -> SimDesign {
    SimDesign {
        kind: DesignKind::Custom,
        d,
        n,
        b: 1,
        link: LinkFunction::Logit,
        correlation: corr,
        beta: vec![0.6, -0.4],
        gamma: vec![-0.5, 0.4],
        seed,
    }
}

/// Clusters of two binary responses without covariates, repeated per cell.
fn binary_pairs(counts: [[usize; 2]; 2]) -> Vec<ClusterData> {
    let mut out = Vec::new();
    for (a, row) in counts.iter().enumerate() {
        for (b, &n) in row.iter().enumerate() {
            for _ in 0..n {
                let id = format!("{}", out.len());
                out.push(ClusterData::complete(id, vec![a + 1, b + 1], vec![vec![], vec![]]).unwrap());
            }
        }
    }
    out
}

#[test]
fn tetrachoric_correlation_from_a_symmetric_table() {
    let data = binary_pairs([[35, 15], [15, 35]]);
    let fit = fit_cl(
        &data,
        LinkFunction::Probit,
        CorrelationKind::Unstructured,
        &FitOptions::default(),
    )
    .unwrap();
    assert!(fit.estimates.gamma[0].abs() < 1e-9);
    // P(both in category 1) = 1/4 + asin(rho) / (2 pi)
    let want = (2.0 * std::f64::consts::PI * (0.35 - 0.25)).sin();
    assert!((fit.theta()[0] - want).abs() < 1e-8, "{} vs {want}", fit.theta()[0]);
}

#[test]
fn binary_cutpoint_matches_observed_frequency() {
    let data = binary_pairs([[20, 10], [25, 45]]);
    let fit = fit_cl(
        &data,
        LinkFunction::Probit,
        CorrelationKind::Exchangeable,
        &FitOptions::default(),
    )
    .unwrap();
    // category 1 frequency over both coordinates: (30 + 45) / 200
    assert!((fit.estimates.gamma[0] - quantile(75.0 / 200.0)).abs() < 1e-8);
}

#[test]
fn weights_at_independence_leave_stage_one_fixed() {
    let design = custom(3, 300, CorrelationModel::Exchangeable { rho: 0.0 }, 17);
    let data = sample_ordinal_mvn(&design, 0).unwrap();
    let opts = FitOptions::default();
    let cl = fit_cl(&data, design.link, CorrelationKind::Exchangeable, &opts).unwrap();
    let indep = CorrelationModel::Exchangeable { rho: 0.0 };
    let w = compute_optimal_weights(&cl.estimates, &indep, &data, design.link, true, &opts).unwrap();
    let (a, _) = solve_stage1(&data, design.link, &w, &cl.estimates, &opts).unwrap();
    for (x, y) in a.to_vec().iter().zip(cl.estimates.to_vec()) {
        assert!((x - y).abs() <= 1e-6);
    }
    // the weighted pipeline stays close as well
    let wcl = fit_wcl(&data, design.link, CorrelationKind::Exchangeable, &opts).unwrap();
    for (x, y) in wcl.estimates.to_vec().iter().zip(cl.estimates.to_vec()) {
        assert!((x - y).abs() <= 0.05);
    }
}

#[test]
fn fits_are_bit_reproducible() {
    let design = custom(4, 120, CorrelationModel::Exchangeable { rho: 0.5 }, 5);
    let data = sample_ordinal_mvn(&design, 2).unwrap();
    let opts = FitOptions::default();
    let a = fit_wcl_with_cl(&data, design.link, CorrelationKind::Unstructured, &opts).unwrap();
    let b = fit_wcl_with_cl(&data, design.link, CorrelationKind::Unstructured, &opts).unwrap();
    assert_eq!(a.cl, b.cl);
    assert_eq!(a.wcl, b.wcl);
    assert_eq!(a.wcl.method, Method::Wcl);
    assert!(a.wcl.diagnostics.stage2_weighted && a.wcl.diagnostics.theta_se_available);
    assert!(a.wcl.se.iter().all(|s| s.is_some_and(|v| v > 0.0)));
}

#[test]
fn weighted_fit_gains_on_longitudinal_design() {
    let design = SimDesign::longitudinal41(300, 1, 77);
    let data = sample_ordinal_mvn(&design, 0).unwrap();
    let both = fit_wcl_with_cl(
        &data,
        design.link,
        CorrelationKind::Unstructured,
        &FitOptions::default(),
    )
    .unwrap();
    for (i, truth) in design.beta.iter().enumerate() {
        let name = format!("beta{}", i + 1);
        let (cl, wcl) = (both.cl.se_of(&name).unwrap(), both.wcl.se_of(&name).unwrap());
        assert!(wcl <= cl * 1.02, "{name}: wcl {wcl} cl {cl}");
        let est = both.wcl.value_of(&name).unwrap();
        assert!((est - truth).abs() < 4.0 * wcl, "{name}: {est} vs {truth}");
    }
}

#[test]
fn long_series_falls_back_to_unweighted_pairs() {
    let design = SimDesign::time_series42(100, 1, 9);
    let data = sample_ordinal_mvn(&design, 0).unwrap();
    let fit = fit_wcl(&data, design.link, CorrelationKind::Ar1, &FitOptions::default()).unwrap();
    let diag = &fit.diagnostics;
    assert!(diag.stage2_fallback && !diag.stage2_weighted && !diag.theta_se_available);
    assert!(fit.se_of("rho").is_none());
    assert!(fit.se_of("beta1").is_some());
    assert!((fit.theta()[0] - 0.8).abs() < 0.15, "rho {}", fit.theta()[0]);
    assert!(diag.stage1_score_norm <= 1e-8 && diag.stage2_score_norm <= 1e-8);
}

#[test]
fn sandwich_halves_when_clusters_double() {
    let design = custom(3, 80, CorrelationModel::Exchangeable { rho: 0.4 }, 23);
    let data = sample_ordinal_mvn(&design, 0).unwrap();
    let a = design.parameters().unwrap();
    let corr = design.correlation.clone();
    let opts = FitOptions::default();
    let double: Vec<ClusterData> = data.iter().chain(&data).cloned().collect();
    let w1 = compute_optimal_weights(&a, &corr, &data, design.link, true, &opts).unwrap();
    let w2 = compute_optimal_weights(&a, &corr, &double, design.link, true, &opts).unwrap();
    let v1 = sandwich_covariance(&a, &corr, &data, design.link, &w1, &opts)
        .unwrap()
        .covariance;
    let v2 = sandwich_covariance(&a, &corr, &double, design.link, &w2, &opts)
        .unwrap()
        .covariance;
    assert!((&v1 * 0.5 - &v2).abs().max() <= 1e-12 * v1.abs().max());
    let eig = v1.clone().symmetric_eigenvalues();
    assert!(eig.min() > 0.0);
    let cl = sandwich_covariance(&a, &corr, &data, design.link, &WeightSet::Identity, &opts)
        .unwrap()
        .covariance;
    for i in 0..a.p() {
        assert!(v1[(i, i)] <= cl[(i, i)] + 1e-9);
    }
}

#[test]
fn option_and_capability_errors() {
    let design = custom(3, 40, CorrelationModel::Exchangeable { rho: 0.2 }, 1);
    let data = sample_ordinal_mvn(&design, 0).unwrap();
    let bad = FitOptions {
        weight_updates: 11,
        ..FitOptions::default()
    };
    assert!(matches!(
        fit_wcl(&data, design.link, CorrelationKind::Exchangeable, &bad)
            .unwrap_err()
            .root(),
        WclError::Domain(_)
    ));
    let zero_lag = FitOptions {
        max_lag: Some(0),
        ..FitOptions::default()
    };
    assert!(fit_cl(&data, design.link, CorrelationKind::Ar1, &zero_lag).is_err());
    let unordered = ParameterVector {
        beta: vec![0.0, 0.0],
        gamma: vec![0.5, 0.1],
    };
    assert!(solve_stage1(
        &data,
        design.link,
        &WeightSet::Identity,
        &unordered,
        &FitOptions::default()
    )
    .is_err());
}

#[test]
fn stage_labels_wrap_solver_failures() {
    // every response in the top category: the cutpoints run off to minus infinity
    let data: Vec<ClusterData> = (0..20)
        .map(|i| ClusterData::complete(format!("{i}"), vec![2, 2], vec![vec![0.1 * i as f64]; 2]).unwrap())
        .collect();
    let opts = FitOptions {
        max_iterations: 5,
        ..FitOptions::default()
    };
    let err = fit_cl(&data, LinkFunction::Probit, CorrelationKind::Exchangeable, &opts).unwrap_err();
    assert!(matches!(err, WclError::Stage { .. }), "{err}");
    assert!(!matches!(err.root(), WclError::Stage { .. }));
}
