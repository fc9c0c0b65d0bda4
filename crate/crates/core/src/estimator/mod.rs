//! Two-stage weighted composite likelihood estimation: root finding for the
//! univariate and bivariate estimating equations, the weight-update loop and
//! sandwich standard errors.

pub mod fit;
pub mod solve;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use fit::{
    compute_optimal_weights, fit_cl, fit_wcl, fit_wcl_with_cl, initial_correlation, initial_parameters,
    sandwich_covariance, Sandwich, WclFit,
};
pub use solve::{solve_stage1, solve_stage2, SolveInfo};

use crate::error::{Result, WclError};
use crate::margins::{LinkFunction, ParameterVector};
use crate::model::CorrelationModel;

/// Estimation method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Cl,
    Wcl,
    Ml,
}

impl FromStr for Method {
    type Err = WclError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cl" => Ok(Method::Cl),
            "wcl" => Ok(Method::Wcl),
            "ml" => Ok(Method::Ml),
            other => Err(WclError::Domain(format!("unknown method '{other}' (cl, wcl, ml)"))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Cl => "cl",
            Method::Wcl => "wcl",
            Method::Ml => "ml",
        })
    }
}

/// Solver and weighting options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    /// Newton steps per stage.
    pub max_iterations: usize,
    /// Target sup-norm of the estimating equations.
    pub tolerance: f64,
    /// Weight updates after the unweighted fit (at most 10).
    pub weight_updates: usize,
    /// Stop updating once no parameter moves by more than this.
    pub update_tolerance: f64,
    /// Largest cluster size for which optimal pair weights and the
    /// correlation standard errors are computed.
    pub stage2_cap: usize,
    /// Only pairs at most this many coordinates apart enter the pairwise
    /// equation.
    pub max_lag: Option<usize>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iterations: 100,
            tolerance: 1e-8,
            weight_updates: 2,
            update_tolerance: 1e-6,
            stage2_cap: 10,
            max_lag: None,
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        if self.weight_updates > 10 {
            return Err(WclError::Domain(format!(
                "at most 10 weight updates, got {}",
                self.weight_updates
            )));
        }
        if !(self.tolerance > 0.0) || !(self.update_tolerance > 0.0) {
            return Err(WclError::Domain("tolerances must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(WclError::Domain("max_iterations must be positive".into()));
        }
        if self.max_lag == Some(0) {
            return Err(WclError::Domain("max_lag must be at least 1".into()));
        }
        Ok(())
    }
}

/// Convergence and provenance details of a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub converged: bool,
    pub stage1_iterations: usize,
    pub stage2_iterations: usize,
    pub stage1_score_norm: f64,
    pub stage2_score_norm: f64,
    /// Weight updates performed (0 for plain composite likelihood).
    pub weight_updates: usize,
    /// Whether the pairwise equation used optimal weights.
    pub stage2_weighted: bool,
    /// Optimal pair weights were requested but the cluster size exceeded
    /// the cap.
    pub stage2_fallback: bool,
    pub theta_se_available: bool,
    /// `J` and `H` are model-based expectations.
    pub model_based_j: bool,
    /// Clusters whose covariance needed a diagonal jitter.
    pub jitter_clusters: usize,
    pub max_lag: Option<usize>,
    pub warnings: Vec<String>,
}

impl FitDiagnostics {
    pub(crate) fn new(max_lag: Option<usize>) -> Self {
        FitDiagnostics {
            converged: true,
            stage1_iterations: 0,
            stage2_iterations: 0,
            stage1_score_norm: 0.0,
            stage2_score_norm: 0.0,
            weight_updates: 0,
            stage2_weighted: false,
            stage2_fallback: false,
            theta_se_available: false,
            model_based_j: true,
            jitter_clusters: 0,
            max_lag,
            warnings: Vec::new(),
        }
    }
}

/// Estimates with standard errors for one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub method: Method,
    pub link: LinkFunction,
    pub estimates: ParameterVector,
    pub correlation: CorrelationModel,
    /// Names of `(beta, alpha, theta)` in order.
    pub names: Vec<String>,
    /// Standard error per name; `None` where unavailable.
    pub se: Vec<Option<f64>>,
    /// Covariance of the parameters that have standard errors, in order.
    pub covariance: Vec<Vec<f64>>,
    pub n_clusters: usize,
    pub n_observations: usize,
    pub l1: f64,
    pub l2: f64,
    /// Full log-likelihood, for maximum likelihood fits.
    pub loglik: Option<f64>,
    pub diagnostics: FitDiagnostics,
}

impl FitReport {
    pub fn theta(&self) -> Vec<f64> {
        self.correlation.theta()
    }

    /// `(beta, alpha, theta)` stacked.
    pub fn values(&self) -> Vec<f64> {
        let mut v = self.estimates.to_vec();
        v.extend(self.theta());
        v
    }

    pub fn se_of(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).and_then(|i| self.se[i])
    }

    pub fn value_of(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.values()[i])
    }
}

/// Default parameter names: `beta1..`, `alpha1..`, then the correlation
/// parameters.
pub fn default_names(p: usize, q: usize, corr: &CorrelationModel) -> Vec<String> {
    let mut v: Vec<String> = (1..=p).map(|i| format!("beta{i}")).collect();
    v.extend((1..=q).map(|i| format!("alpha{i}")));
    v.extend(corr.param_names());
    v
}
