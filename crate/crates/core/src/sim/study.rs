//! Replication studies: repeated sampling and fitting with bias, SD,
//! mean model-based SD and RMSE per parameter.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::design::{sample_ordinal_mvn, DesignKind, SimDesign};
use crate::error::{Result, WclError};
use crate::estimator::{fit_cl, fit_wcl_with_cl, FitOptions, FitReport, Method};

/// Largest tolerated share of failed replications.
pub const MAX_FAILURE_RATE: f64 = 0.05;

/// Estimates and standard errors of one method in one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodFit {
    pub method: Method,
    pub estimates: Vec<f64>,
    pub se: Vec<Option<f64>>,
}

/// Outcome of one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub replication: u64,
    pub fits: Vec<MethodFit>,
    pub error: Option<String>,
}

/// Summary statistics of one parameter under one method, already scaled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub method: Method,
    pub parameter: String,
    pub truth: f64,
    pub mean: f64,
    pub bias: f64,
    /// Standard deviation over replications (divisor `B`).
    pub sd: f64,
    /// Square root of the mean sandwich variance; `None` without SEs.
    pub root_vbar: Option<f64>,
    pub rmse: f64,
    /// Monte Carlo standard error of `bias`.
    pub bias_mcse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationSummary {
    pub design: SimDesign,
    pub options: FitOptions,
    pub methods: Vec<Method>,
    /// Multiplier applied to every statistic (`n`, or `d` for one series).
    pub scale: f64,
    pub scale_label: String,
    pub replications: usize,
    pub failures: usize,
    pub failure_rate: f64,
    pub parameters: Vec<ParameterSummary>,
}

impl ReplicationSummary {
    pub fn get(&self, method: Method, parameter: &str) -> Option<&ParameterSummary> {
        self.parameters
            .iter()
            .find(|p| p.method == method && p.parameter == parameter)
    }

    /// Long-format table with columns `method,statistic,parameter,value`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["method", "statistic", "parameter", "value"])
            .map_err(|e| WclError::Io(e.to_string()))?;
        let l = &self.scale_label;
        for p in &self.parameters {
            let mut stats = vec![
                (format!("{l}Bias"), Some(p.bias)),
                (format!("{l}SD"), Some(p.sd)),
                (format!("{l}sqrtVbar"), p.root_vbar),
                (format!("{l}RMSE"), Some(p.rmse)),
            ];
            stats.retain(|s| s.1.is_some());
            for (name, v) in stats {
                w.write_record([
                    p.method.to_string(),
                    name,
                    p.parameter.clone(),
                    format!("{:.6}", v.unwrap()),
                ])
                .map_err(|e| WclError::Io(e.to_string()))?;
            }
        }
        let bytes = w.into_inner().map_err(|e| WclError::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| WclError::Io(e.to_string()))
    }
}

/// Study manifest: design, options, seed and failures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyManifest {
    pub design: SimDesign,
    pub options: FitOptions,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub replications: usize,
    pub failures: usize,
    pub failure_messages: Vec<(u64, String)>,
}

fn to_method_fit(r: &FitReport) -> MethodFit {
    MethodFit {
        method: r.method,
        estimates: r.values(),
        se: r.se.clone(),
    }
}

/// Fits one replication with the requested methods.
pub fn run_replication(
    design: &SimDesign,
    replication: u64,
    methods: &[Method],
    opts: &FitOptions,
) -> ReplicationRecord {
    let attempt = || -> Result<Vec<MethodFit>> {
        let data = sample_ordinal_mvn(design, replication)?;
        let kind = design.correlation.kind();
        let mut out = Vec::new();
        if methods.contains(&Method::Wcl) {
            let f = fit_wcl_with_cl(&data, design.link, kind, opts)?;
            if methods.contains(&Method::Cl) {
                out.push(to_method_fit(&f.cl));
            }
            out.push(to_method_fit(&f.wcl));
        } else if methods.contains(&Method::Cl) {
            out.push(to_method_fit(&fit_cl(&data, design.link, kind, opts)?));
        }
        Ok(out)
    };
    match attempt() {
        Ok(fits) => ReplicationRecord {
            replication,
            fits,
            error: None,
        },
        Err(e) => ReplicationRecord {
            replication,
            fits: vec![],
            error: Some(e.to_string()),
        },
    }
}

/// Summaries of per-replication records.
pub fn summarize(
    design: &SimDesign,
    opts: &FitOptions,
    methods: &[Method],
    records: &[ReplicationRecord],
) -> Result<ReplicationSummary> {
    let a = design.parameters()?;
    let mut truth = a.to_vec();
    truth.extend(design.correlation.theta());
    let names = crate::estimator::default_names(a.p(), a.q(), &design.correlation);
    let (scale, scale_label) = match design.kind {
        DesignKind::TimeSeries42 => (design.d as f64, "d"),
        _ => (design.n as f64, "n"),
    };
    let ok: Vec<&ReplicationRecord> = records.iter().filter(|r| r.error.is_none()).collect();
    let failures = records.len() - ok.len();
    let failure_rate = failures as f64 / records.len().max(1) as f64;
    if failure_rate > MAX_FAILURE_RATE {
        return Err(WclError::Study(format!(
            "{failures} of {} replications failed (rate {:.3} above {MAX_FAILURE_RATE}); first: {}",
            records.len(),
            failure_rate,
            records.iter().find_map(|r| r.error.clone()).unwrap_or_default()
        )));
    }
    let b = ok.len() as f64;
    let mut parameters = Vec::new();
    for &m in methods {
        for (i, name) in names.iter().enumerate() {
            let fits: Vec<&MethodFit> = ok
                .iter()
                .filter_map(|r| r.fits.iter().find(|f| f.method == m))
                .collect();
            let est: Vec<f64> = fits.iter().map(|f| f.estimates[i]).collect();
            let mean = est.iter().sum::<f64>() / b;
            let sd = (est.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / b).sqrt();
            let rmse = (est.iter().map(|e| (e - truth[i]).powi(2)).sum::<f64>() / b).sqrt();
            let ses: Vec<f64> = fits.iter().filter_map(|f| f.se[i]).collect();
            let root_vbar = (ses.len() == fits.len() && !ses.is_empty())
                .then(|| (ses.iter().map(|s| s * s).sum::<f64>() / ses.len() as f64).sqrt());
            parameters.push(ParameterSummary {
                method: m,
                parameter: name.clone(),
                truth: truth[i],
                mean,
                bias: scale * (mean - truth[i]),
                sd: scale * sd,
                root_vbar: root_vbar.map(|v| scale * v),
                rmse: scale * rmse,
                bias_mcse: scale * sd / b.sqrt(),
            });
        }
    }
    Ok(ReplicationSummary {
        design: design.clone(),
        options: opts.clone(),
        methods: methods.to_vec(),
        scale,
        scale_label: scale_label.to_string(),
        replications: records.len(),
        failures,
        failure_rate,
        parameters,
    })
}

/// Runs `B` replications of the design and summarizes them.
pub fn replication_study(
    design: &SimDesign,
    methods: &[Method],
    opts: &FitOptions,
) -> Result<(ReplicationSummary, StudyManifest)> {
    design.validate()?;
    opts.validate()?;
    if methods.is_empty() || methods.contains(&Method::Ml) {
        return Err(WclError::Domain("studies compare cl and wcl".into()));
    }
    let records: Vec<ReplicationRecord> = (0..design.b as u64)
        .into_par_iter()
        .map(|r| run_replication(design, r, methods, opts))
        .collect();
    let summary = summarize(design, opts, methods, &records)?;
    let manifest = StudyManifest {
        design: design.clone(),
        options: opts.clone(),
        methods: methods.to_vec(),
        seed: design.seed,
        replications: records.len(),
        failures: summary.failures,
        failure_messages: records
            .iter()
            .filter_map(|r| r.error.clone().map(|e| (r.replication, e)))
            .collect(),
    };
    Ok((summary, manifest))
}
