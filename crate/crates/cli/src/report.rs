//! Machine-readable and text reports.

use serde::{Deserialize, Serialize};
use wcl_core::estimator::{FitDiagnostics, FitReport};
use wcl_core::kernels::normal;
use wcl_core::oracle::{EfficiencyConfig, EfficiencyRow};
use wcl_core::sim::{ReplicationSummary, StudyManifest};

use crate::config::{FitConfig, SimulateConfig};
use crate::dataset::Scaling;
use crate::SCHEMA_VERSION;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterRow {
    pub name: String,
    pub estimate: f64,
    pub se: Option<f64>,
    pub z: Option<f64>,
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub path: Option<String>,
    pub n_clusters: usize,
    pub n_observations: usize,
    pub max_cluster_size: usize,
    pub categories: usize,
    pub covariates: Vec<String>,
    pub standardization: Vec<Scaling>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDocument {
    pub schema_version: String,
    pub kind: String,
    pub config: FitConfig,
    pub data: DataSummary,
    pub method: String,
    pub link: String,
    pub correlation: String,
    pub parameters: Vec<ParameterRow>,
    pub l1: f64,
    pub l2: f64,
    pub loglik: Option<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub diagnostics: FitDiagnostics,
}

/// Two-sided normal p-value.
pub fn p_value(z: f64) -> f64 {
    2.0 * normal::sf(z.abs())
}

pub fn parameter_rows(report: &FitReport, covariates: &[String]) -> Vec<ParameterRow> {
    let p = report.estimates.p();
    report
        .names
        .iter()
        .zip(report.values())
        .zip(&report.se)
        .enumerate()
        .map(|(i, ((name, est), se))| {
            // slopes carry their covariate names
            let name = match covariates.get(i) {
                Some(c) if i < p => c.clone(),
                _ => name.clone(),
            };
            let z = se.filter(|s| *s > 0.0).map(|s| est / s);
            ParameterRow {
                name,
                estimate: est,
                se: *se,
                z,
                p_value: z.map(p_value),
            }
        })
        .collect()
}

pub fn fit_document(config: &FitConfig, data: DataSummary, report: &FitReport) -> FitDocument {
    FitDocument {
        schema_version: SCHEMA_VERSION.into(),
        kind: "fit".into(),
        config: config.clone(),
        parameters: parameter_rows(report, &data.covariates),
        data,
        method: report.method.to_string(),
        link: report.link.to_string(),
        correlation: report.correlation.kind().to_string(),
        l1: report.l1,
        l2: report.l2,
        loglik: report.loglik,
        covariance: report.covariance.clone(),
        diagnostics: report.diagnostics.clone(),
    }
}

fn opt(v: Option<f64>, prec: usize) -> String {
    v.map_or("-".to_string(), |v| format!("{v:.prec$}"))
}

/// Table with `Est. SE Z p-value` columns followed by the composite
/// log-likelihoods.
pub fn fit_text(doc: &FitDocument) -> String {
    let mut s = String::new();
    s.push_str(&format!(
        "Method: {}   Link: {}   Correlation: {}\n",
        doc.method.to_uppercase(),
        doc.link,
        doc.correlation
    ));
    s.push_str(&format!(
        "Clusters: {}   Observations: {}   Categories: {}\n\n",
        doc.data.n_clusters, doc.data.n_observations, doc.data.categories
    ));
    let w = doc.parameters.iter().map(|p| p.name.len()).max().unwrap_or(4).max(9);
    s.push_str(&format!(
        "{:<w$} {:>10} {:>10} {:>8} {:>9}\n",
        "", "Est.", "SE", "Z", "p-value"
    ));
    for p in &doc.parameters {
        s.push_str(&format!(
            "{:<w$} {:>10.4} {:>10} {:>8} {:>9}\n",
            p.name,
            p.estimate,
            opt(p.se, 4),
            opt(p.z, 2),
            p.p_value.map_or("-".to_string(), |v| if v < 1e-4 {
                "<0.0001".into()
            } else {
                format!("{v:.4}")
            }),
        ));
    }
    s.push('\n');
    s.push_str(&format!("{:<w$} {:>10.3}\n", "L1", doc.l1));
    s.push_str(&format!("{:<w$} {:>10.3}\n", "L2", doc.l2));
    if let Some(ll) = doc.loglik {
        s.push_str(&format!("{:<w$} {:>10.3}\n", "Log-lik", ll));
    }
    let d = &doc.diagnostics;
    s.push_str(&format!(
        "\nconverged: {}; stage-1 iterations {}; stage-2 iterations {}; weight updates {}\n",
        if d.converged { "yes" } else { "no" },
        d.stage1_iterations,
        d.stage2_iterations,
        d.weight_updates
    ));
    if d.stage2_fallback {
        s.push_str("pairwise weights: identity (cluster size above the stage-2 cap)\n");
    }
    if d.model_based_j {
        s.push_str("standard errors: model-based J\n");
    }
    for warn in &d.warnings {
        s.push_str(&format!("warning: {warn}\n"));
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyDocument {
    pub schema_version: String,
    pub kind: String,
    pub config: EfficiencyConfig,
    pub rows: Vec<EfficiencyRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationDocument {
    pub schema_version: String,
    pub kind: String,
    pub config: SimulateConfig,
    pub manifest: StudyManifest,
    pub summary: ReplicationSummary,
}
