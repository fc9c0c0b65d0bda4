//! Full-likelihood oracle: probabilities, information, ML fits and the
//! asymptotic variance table.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wcl_core::estimator::{fit_wcl_with_cl, FitOptions, Method};
use wcl_core::margins::{LinkFunction, ParameterVector};
use wcl_core::model::{ClusterData, CorrelationKind, CorrelationModel};
use wcl_core::oracle::{
    asymptotic_variance_table, check_capability, cluster_pmf, fisher_information, full_loglik, loglik_gradient, ml_fit,
    table_to_csv, EfficiencyConfig,
};
use wcl_core::scores::{assemble_j_h, univariate_loglik, WeightSet};
use wcl_core::sim::{sample_ordinal_mvn, DesignKind, SimDesign, LONGITUDINAL_R};
use wcl_core::WclError;

fn outcomes(d: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..d {
        out = out
            .into_iter()
            .flat_map(|y| {
                (1..=k).map(move |c| {
                    let mut z = y.clone();
                    z.push(c);
                    z
                })
            })
            .collect();
    }
    out
}

fn template(d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..d).map(|_| vec![rng.gen_range(-1.0..1.0)]).collect()
}

fn longitudinal_r() -> CorrelationModel {
    CorrelationModel::Unstructured {
        dim: 4,
        rho: LONGITUDINAL_R.to_vec(),
    }
}

#[test]
fn probabilities_sum_to_one() {
    let a = ParameterVector::new(vec![0.5], vec![0.33, 0.67]).unwrap();
    for (d, corr) in [
        (3, CorrelationModel::Exchangeable { rho: 0.5 }),
        (5, CorrelationModel::Exchangeable { rho: 0.8 }),
        (4, longitudinal_r()),
        (4, CorrelationModel::Ar1 { rho: -0.6 }),
    ] {
        let x = template(d, d as u64);
        let mass: f64 = outcomes(d, 3)
            .into_iter()
            .map(|y| {
                let c = ClusterData::complete("c", y, x.clone()).unwrap();
                cluster_pmf(&a, &corr, &c, LinkFunction::Logit).unwrap()
            })
            .sum();
        assert!((mass - 1.0).abs() <= 1e-8, "{corr:?}: {mass}");
    }
}

#[test]
fn one_factor_and_exact_paths_agree() {
    let a = ParameterVector::new(vec![-0.3], vec![-0.4, 0.8]).unwrap();
    for d in [2, 3, 4] {
        let x = template(d, 40 + d as u64);
        for rho in [0.1, 0.6, 0.9] {
            let exch = CorrelationModel::Exchangeable { rho };
            let flat = CorrelationModel::Unstructured {
                dim: d,
                rho: vec![rho; d * (d - 1) / 2],
            };
            for y in outcomes(d, 3) {
                let c = ClusterData::complete("c", y, x.clone()).unwrap();
                let p = cluster_pmf(&a, &exch, &c, LinkFunction::Probit).unwrap();
                let q = cluster_pmf(&a, &flat, &c, LinkFunction::Probit).unwrap();
                assert!((p - q).abs() <= 1e-8);
            }
        }
    }
}

#[test]
fn independence_likelihood_is_univariate() {
    let design = SimDesign {
        kind: DesignKind::Custom,
        d: 4,
        n: 50,
        b: 1,
        link: LinkFunction::Logit,
        correlation: longitudinal_r(),
        beta: vec![0.4, -0.2],
        gamma: vec![-0.6, 0.2, 0.9],
        seed: 3,
    };
    let data = sample_ordinal_mvn(&design, 0).unwrap();
    let a = design.parameters().unwrap();
    let l1 = univariate_loglik(&a, &data, design.link).unwrap();
    for corr in [
        CorrelationModel::Exchangeable { rho: 0.0 },
        CorrelationModel::Unstructured {
            dim: 4,
            rho: vec![0.0; 6],
        },
    ] {
        let l = full_loglik(&a, &corr, &data, design.link).unwrap();
        assert!((l - l1).abs() <= 1e-9 * l1.abs());
    }
}

#[test]
fn information_matches_independence_at_zero_correlation() {
    let config = EfficiencyConfig {
        n: 60,
        ..EfficiencyConfig::default()
    };
    let info = fisher_information(&config, 0.0).unwrap();
    let a = ParameterVector::new(config.beta.clone(), config.gamma.clone()).unwrap();
    let clusters = config.clusters().unwrap();
    let indep = CorrelationModel::Exchangeable { rho: 0.0 };
    let h = assemble_j_h(&a, &indep, &clusters, &WeightSet::Identity, config.link)
        .unwrap()
        .h;
    let r = a.r();
    let want = -h.view((0, 0), (r, r)).into_owned() / config.n as f64;
    let got = info.view((0, 0), (r, r)).into_owned();
    assert!((&got - &want).abs().max() <= 1e-6 * want.abs().max());
    assert!((&info - info.transpose()).abs().max() < 1e-12);
    assert!(info.symmetric_eigenvalues().min() > 0.0);
}

#[test]
fn ml_variances_at_weak_correlation() {
    let info = fisher_information(&EfficiencyConfig::default(), 0.1).unwrap();
    let v = info.try_inverse().unwrap();
    // published values at this setting; the covariate draw differs
    for (i, want) in [4.064, 1.572, 1.695, 0.856].iter().enumerate() {
        assert!((v[(i, i)] - want).abs() <= 0.02 * want, "{i}: {} vs {want}", v[(i, i)]);
    }
}

#[test]
fn efficiency_table_structure() {
    let config = EfficiencyConfig {
        rho_grid: vec![0.0, 0.1, 0.4, 0.7, 0.9],
        ..EfficiencyConfig::default()
    };
    let rows = asymptotic_variance_table(&config).unwrap();
    assert_eq!(rows.len(), 5 * 3 * 4);
    let pick = |rho: f64, m: Method, p: &str| {
        rows.iter()
            .find(|r| r.rho == rho && r.method == m && r.parameter == p)
            .unwrap()
            .clone()
    };
    for r in rows.iter().filter(|r| r.method == Method::Ml) {
        assert_eq!(r.efficiency, 1.0);
    }
    let zero: Vec<f64> = [Method::Ml, Method::Wcl, Method::Cl]
        .iter()
        .map(|m| pick(0.0, *m, "beta1").n_variance)
        .collect();
    assert!((zero[0] - zero[1]).abs() <= 1e-6 && (zero[0] - zero[2]).abs() <= 1e-6);
    let mut last = f64::INFINITY;
    for rho in [0.1, 0.4, 0.7, 0.9] {
        let cl = pick(rho, Method::Cl, "beta1");
        let wcl = pick(rho, Method::Wcl, "beta1");
        assert!(cl.efficiency < last);
        last = cl.efficiency;
        assert!(wcl.n_variance <= cl.n_variance + 1e-6);
    }
    assert!((pick(0.7, Method::Cl, "beta1").efficiency - 0.658).abs() <= 0.02);
    let csv = table_to_csv(&rows).unwrap();
    assert!(csv.starts_with("d,rho,method,parameter,n_variance,efficiency\n"));
    assert_eq!(csv.lines().count(), rows.len() + 1);
}

#[test]
fn capability_envelope() {
    assert!(check_capability(&CorrelationModel::Exchangeable { rho: 0.3 }, 40).is_ok());
    let un = CorrelationModel::Unstructured {
        dim: 5,
        rho: vec![0.1; 10],
    };
    assert!(matches!(check_capability(&un, 5), Err(WclError::Capability(_))));
    assert!(check_capability(&CorrelationModel::Ar1 { rho: 0.3 }, 5).is_err());
    let design = SimDesign {
        kind: DesignKind::Custom,
        d: 5,
        n: 10,
        b: 1,
        link: LinkFunction::Probit,
        correlation: CorrelationModel::Ar1 { rho: 0.3 },
        beta: vec![0.2],
        gamma: vec![-0.3, 0.3],
        seed: 2,
    };
    let data = sample_ordinal_mvn(&design, 0).unwrap();
    let err = ml_fit(
        &data,
        design.link,
        CorrelationKind::Unstructured,
        &FitOptions::default(),
    )
    .unwrap_err();
    assert!(matches!(err.root(), WclError::Capability(_)), "{err}");
    let big = EfficiencyConfig {
        d: 20,
        ..EfficiencyConfig::default()
    };
    assert!(matches!(fisher_information(&big, 0.5), Err(WclError::Capability(_))));
}

#[test]
fn maximum_likelihood_fit_is_stationary() {
    let design = SimDesign {
        kind: DesignKind::Custom,
        d: 3,
        n: 200,
        b: 1,
        link: LinkFunction::Logit,
        correlation: CorrelationModel::Exchangeable { rho: 0.6 },
        beta: vec![0.5],
        gamma: vec![0.33, 0.67],
        seed: 8,
    };
    let data = sample_ordinal_mvn(&design, 0).unwrap();
    let opts = FitOptions::default();
    let ml = ml_fit(&data, design.link, CorrelationKind::Exchangeable, &opts).unwrap();
    assert_eq!(ml.method, Method::Ml);
    let g = loglik_gradient(&ml.estimates, &ml.correlation, &data, design.link).unwrap();
    assert!(g.amax() <= 1e-6, "gradient {g}");
    let top = ml.loglik.unwrap();
    let base = ml.values();
    for i in 0..base.len() {
        for step in [-1e-3, 1e-3] {
            let mut v = base.clone();
            v[i] += step;
            let a = ParameterVector::from_slice(&v[..3], 1);
            let c = ml.correlation.with_theta(&v[3..]);
            if a.validate().is_ok() {
                assert!(full_loglik(&a, &c, &data, design.link).unwrap() <= top + 1e-9);
            }
        }
    }
    let both = fit_wcl_with_cl(&data, design.link, CorrelationKind::Exchangeable, &opts).unwrap();
    let (m, w, c) = (
        ml.se_of("beta1").unwrap(),
        both.wcl.se_of("beta1").unwrap(),
        both.cl.se_of("beta1").unwrap(),
    );
    assert!(m <= w * 1.05 && w <= c * 1.02, "ml {m} wcl {w} cl {c}");
}

#[test]
fn unstructured_ml_is_a_local_maximum() {
    let design = SimDesign {
        kind: DesignKind::Custom,
        d: 3,
        n: 60,
        b: 1,
        link: LinkFunction::Probit,
        correlation: CorrelationModel::Unstructured {
            dim: 3,
            rho: vec![0.5, 0.2, 0.4],
        },
        beta: vec![0.3],
        gamma: vec![-0.5, 0.5],
        seed: 12,
    };
    let data = sample_ordinal_mvn(&design, 0).unwrap();
    let ml = ml_fit(
        &data,
        design.link,
        CorrelationKind::Unstructured,
        &FitOptions::default(),
    )
    .unwrap();
    let top = ml.loglik.unwrap();
    let base = ml.values();
    // a refined grid around the estimate finds nothing higher
    let mut best = (top, 0usize, 0.0);
    for i in 0..base.len() {
        for s in [-1e-3, -1e-4, 1e-4, 1e-3] {
            let mut v = base.clone();
            v[i] += s;
            let a = ParameterVector::from_slice(&v[..3], 1);
            let c = ml.correlation.with_theta(&v[3..]);
            if let Ok(l) = full_loglik(&a, &c, &data, design.link) {
                if l > best.0 {
                    best = (l, i, s);
                }
            }
        }
    }
    assert!(best.0 <= top + 1e-8, "higher at parameter {} step {}", best.1, best.2);
    let cov = DMatrix::from_fn(base.len(), base.len(), |i, j| ml.covariance[i][j]);
    assert!(cov.symmetric_eigenvalues().min() > 0.0);
}
