//! Data generation and replication summaries.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wcl_core::estimator::{FitOptions, Method};
use wcl_core::margins::LinkFunction;
use wcl_core::model::CorrelationModel;
use wcl_core::sim::{
    draw_latent, gen_design_covariates, replication_study, sample_ordinal_mvn, summarize, DesignKind, MethodFit,
    ReplicationRecord, SimDesign, LONGITUDINAL_R,
};
use wcl_core::WclError;

fn corr(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn longitudinal_covariates() {
    let design = SimDesign::longitudinal41(200, 1, 4);
    for x in gen_design_covariates(&design, 0) {
        assert_eq!(x.len(), 4);
        for (j, row) in x.iter().enumerate() {
            assert_eq!(row[0], (j + 1) as f64);
            assert_eq!(row[2], row[0] * row[1]);
            assert!((-1.0..=1.0).contains(&row[3]));
            assert_eq!(row[1], x[0][1]);
        }
    }
}

#[test]
fn series_covariates() {
    let design = SimDesign::time_series42(4000, 1, 6);
    let x = &gen_design_covariates(&design, 0)[0];
    let mean = x.iter().map(|r| r[0]).sum::<f64>() / x.len() as f64;
    assert!((mean - 0.4).abs() < 0.03, "{mean}");
    let u: Vec<f64> = x.iter().map(|r| r[1]).collect();
    assert!(u.iter().all(|v| *v > 0.0 && *v < 1.0));
    let mean_u = u.iter().sum::<f64>() / u.len() as f64;
    assert!((mean_u - 0.5).abs() < 0.03, "{mean_u}");
    // the dependence is Gaussian AR(0.5) on the normal scores
    let z: Vec<f64> = u.iter().map(|v| wcl_core::kernels::normal::quantile(*v)).collect();
    let lag1 = corr(&z[..z.len() - 1], &z[1..]);
    assert!((lag1 - 0.5).abs() < 0.05, "{lag1}");
    assert!(x.iter().all(|r| r[2] == r[0] * r[1]));
}

#[test]
fn latent_draws_reproduce_correlations() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let r = CorrelationModel::Unstructured {
        dim: 4,
        rho: LONGITUDINAL_R.to_vec(),
    };
    let coords = [0, 1, 2, 3];
    let draws: Vec<Vec<f64>> = (0..20000).map(|_| draw_latent(&r, &coords, None, &mut rng)).collect();
    let col = |j: usize| draws.iter().map(|z| z[j]).collect::<Vec<f64>>();
    let mut u = 0;
    for j in 0..4 {
        for k in j + 1..4 {
            assert!((corr(&col(j), &col(k)) - LONGITUDINAL_R[u]).abs() < 0.03);
            u += 1;
        }
    }
    // AR1 over a gap of three time units
    let ar = CorrelationModel::Ar1 { rho: 0.8 };
    let draws: Vec<Vec<f64>> = (0..20000).map(|_| draw_latent(&ar, &[0, 3], None, &mut rng)).collect();
    let c = corr(
        &draws.iter().map(|z| z[0]).collect::<Vec<_>>(),
        &draws.iter().map(|z| z[1]).collect::<Vec<_>>(),
    );
    assert!((c - 0.512).abs() < 0.03, "{c}");
}

#[test]
fn equal_categories_and_independent_pairs() {
    let design = SimDesign {
        kind: DesignKind::Custom,
        d: 2,
        n: 20000,
        b: 1,
        link: LinkFunction::Probit,
        correlation: CorrelationModel::Exchangeable { rho: 0.0 },
        beta: vec![0.0],
        gamma: wcl_core::sim::equal_probit_cutpoints(5),
        seed: 31,
    };
    let data = sample_ordinal_mvn(&design, 0).unwrap();
    let mut freq = [0.0f64; 5];
    for c in &data {
        for &y in &c.y {
            freq[y - 1] += 1.0;
        }
    }
    for f in freq {
        assert!((f / 40000.0 - 0.2).abs() < 0.01);
    }
    let a: Vec<f64> = data.iter().map(|c| c.y[0] as f64).collect();
    let b: Vec<f64> = data.iter().map(|c| c.y[1] as f64).collect();
    assert!(corr(&a, &b).abs() < 0.03);
}

#[test]
fn study_is_reproducible_and_consistent() {
    let design = SimDesign::longitudinal41(60, 6, 13);
    let opts = FitOptions::default();
    let (s1, m1) = replication_study(&design, &[Method::Cl, Method::Wcl], &opts).unwrap();
    let (s2, m2) = replication_study(&design, &[Method::Cl, Method::Wcl], &opts).unwrap();
    assert_eq!(s1, s2);
    assert_eq!(m1, m2);
    assert_eq!(s1.to_csv().unwrap(), s2.to_csv().unwrap());
    assert_eq!(s1.scale_label, "n");
    assert_eq!(s1.parameters.len(), 2 * (4 + 4 + 6));
    for p in &s1.parameters {
        assert!((p.rmse.powi(2) - (p.bias.powi(2) + p.sd.powi(2))).abs() <= 1e-9 * p.rmse.powi(2).max(1.0));
        assert!(p.root_vbar.is_some());
    }
    let csv = s1.to_csv().unwrap();
    assert!(csv.starts_with("method,statistic,parameter,value\n"));
    assert!(csv.contains("\nwcl,nSD,beta4,"));
}

#[test]
fn series_study_scales_by_length() {
    let design = SimDesign::time_series42(40, 3, 5);
    let (s, _) = replication_study(&design, &[Method::Cl], &FitOptions::default()).unwrap();
    assert_eq!(s.scale_label, "d");
    assert_eq!(s.scale, 40.0);
    assert!(s.to_csv().unwrap().contains("\ncl,dBias,rho,"));
}

#[test]
fn failures_above_threshold_abort_the_study() {
    let design = SimDesign::longitudinal41(10, 20, 1);
    let ok = |r: u64| ReplicationRecord {
        replication: r,
        fits: vec![MethodFit {
            method: Method::Cl,
            estimates: vec![0.0; 14],
            se: vec![Some(1.0); 14],
        }],
        error: None,
    };
    let bad = |r: u64| ReplicationRecord {
        replication: r,
        fits: vec![],
        error: Some("no convergence".into()),
    };
    let opts = FitOptions::default();
    let mut records: Vec<ReplicationRecord> = (0..19).map(ok).collect();
    records.push(bad(19));
    let s = summarize(&design, &opts, &[Method::Cl], &records).unwrap();
    assert_eq!(s.failures, 1);
    records[0] = bad(0);
    let err = summarize(&design, &opts, &[Method::Cl], &records).unwrap_err();
    assert!(matches!(err, WclError::Study(_)));
    assert!(replication_study(&design, &[Method::Ml], &opts).is_err());
    assert!(replication_study(&design, &[], &opts).is_err());
}
