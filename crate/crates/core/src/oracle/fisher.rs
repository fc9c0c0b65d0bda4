//! Expected information of the full likelihood under exchangeable
//! correlation, by enumerating every outcome of each cluster, and the
//! asymptotic variance comparison of ML, WCL and CL.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::likelihood::{coordinate_terms, independent_terms, likelihood_rule};
use crate::error::{Result, WclError};
use crate::estimator::fit::{all_moments, sandwich_from};
use crate::estimator::{default_names, FitOptions, Method};
use crate::margins::{LinkFunction, MarginEval, ParameterVector};
use crate::model::{ClusterData, CorrelationModel};
use crate::scores::{MomentLevel, WeightSet};
use crate::sim::{gen_design_covariates, DesignKind, SimDesign};

/// Setting of an asymptotic efficiency comparison: `n` covariate draws of
/// `d` uniform(-1, 1) covariate vectors under exchangeable correlation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EfficiencyConfig {
    pub d: usize,
    pub rho_grid: Vec<f64>,
    pub n: usize,
    pub seed: u64,
    pub link: LinkFunction,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    /// Upper bound on `K^d * n` outcome evaluations.
    pub max_evaluations: f64,
}

impl Default for EfficiencyConfig {
    fn default() -> Self {
        EfficiencyConfig {
            d: 3,
            rho_grid: vec![0.1, 0.4, 0.7, 0.9],
            n: 500,
            seed: 2024,
            link: LinkFunction::Logit,
            beta: vec![0.5],
            gamma: vec![0.33, 0.67],
            max_evaluations: 2e8,
        }
    }
}

impl EfficiencyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(WclError::Domain("efficiency comparison needs d >= 2".into()));
        }
        if self.n == 0 {
            return Err(WclError::Domain("n must be positive".into()));
        }
        if let Some(r) = self.rho_grid.iter().find(|r| !(0.0..1.0).contains(*r)) {
            return Err(WclError::Domain(format!("correlation {r} outside [0, 1)")));
        }
        ParameterVector::new(self.beta.clone(), self.gamma.clone())?;
        let evals = ((self.gamma.len() + 1) as f64).powi(self.d as i32) * self.n as f64;
        if evals > self.max_evaluations {
            return Err(WclError::Capability(format!(
                "{evals:.3e} outcome evaluations exceed the budget of {:.3e}",
                self.max_evaluations
            )));
        }
        Ok(())
    }

    fn design(&self) -> SimDesign {
        SimDesign {
            kind: DesignKind::Custom,
            d: self.d,
            n: self.n,
            b: 1,
            link: self.link,
            correlation: CorrelationModel::Exchangeable { rho: 0.0 },
            beta: self.beta.clone(),
            gamma: self.gamma.clone(),
            seed: self.seed,
        }
    }

    /// The covariate draws, one cluster each (responses are placeholders).
    pub fn clusters(&self) -> Result<Vec<ClusterData>> {
        gen_design_covariates(&self.design(), 0)
            .into_iter()
            .enumerate()
            .map(|(i, x)| ClusterData::complete(format!("{}", i + 1), vec![1; self.d], x))
            .collect()
    }
}

fn cluster_margins(a: &ParameterVector, c: &ClusterData, link: LinkFunction) -> Result<Vec<MarginEval>> {
    c.x.iter()
        .map(|x| {
            let nu = a.predictor(x);
            let g: Vec<f64> = a.gamma.iter().map(|v| v + nu).collect();
            MarginEval::new(&g, link)
        })
        .collect()
}

/// Information of one cluster over `(beta, gamma, rho)`, summing
/// `grad f grad f^T / f` over all `K^d` outcomes.
pub fn cluster_information(
    a: &ParameterVector,
    rho: f64,
    cluster: &ClusterData,
    link: LinkFunction,
) -> Result<DMatrix<f64>> {
    let ms = cluster_margins(a, cluster, link)?;
    let r = a.r();
    let t = r + 1;
    let d = ms.len();
    let k = a.categories();
    let mut info = vec![0.0; t * t];
    let mut mass = 0.0;
    if rho == 0.0 {
        let terms: Vec<_> = ms
            .iter()
            .zip(&cluster.x)
            .map(|(m, x)| independent_terms(m, x))
            .collect();
        // state per level: f, df (r), e1, e2
        let w = r + 3;
        let mut stack = vec![0.0; (d + 1) * w];
        stack[0] = 1.0;
        indep_dfs(0, d, k, r, &terms, &mut stack, &mut info, &mut mass);
    } else {
        let rule = likelihood_rule();
        let nn = rule.len();
        let terms: Vec<_> = ms
            .iter()
            .zip(&cluster.x)
            .map(|(m, x)| coordinate_terms(m, x, rho, &rule.nodes, t))
            .collect();
        let mut pstack = vec![0.0; (d + 1) * nn];
        pstack[..nn].copy_from_slice(&rule.weights);
        let mut dstack = vec![0.0; (d + 1) * nn * t];
        factor_dfs(0, d, k, nn, t, &terms, &mut pstack, &mut dstack, &mut info, &mut mass);
    }
    if (mass - 1.0).abs() > 1e-6 {
        return Err(WclError::Domain(format!("outcome probabilities sum to {mass}")));
    }
    Ok(DMatrix::from_row_slice(t, t, &info))
}

#[allow(clippy::too_many_arguments)]
fn factor_dfs(
    j: usize,
    d: usize,
    k: usize,
    nn: usize,
    t: usize,
    terms: &[super::likelihood::CoordinateTerms],
    pstack: &mut [f64],
    dstack: &mut [f64],
    info: &mut [f64],
    mass: &mut f64,
) {
    if j == d {
        let pv = &pstack[d * nn..(d + 1) * nn];
        let f: f64 = pv.iter().sum();
        if f <= 0.0 {
            return;
        }
        *mass += f;
        let dv = &dstack[d * nn * t..(d + 1) * nn * t];
        let mut g = [0.0f64; 16];
        let g = &mut g[..t];
        for node in 0..nn {
            for i in 0..t {
                g[i] += dv[node * t + i];
            }
        }
        for a in 0..t {
            for b in 0..t {
                info[a * t + b] += g[a] * g[b] / f;
            }
        }
        return;
    }
    let ct = &terms[j];
    for c in 0..k {
        let (plo, phi) = pstack.split_at_mut((j + 1) * nn);
        let (prev_p, next_p) = (&plo[j * nn..], &mut phi[..nn]);
        let (dlo, dhi) = dstack.split_at_mut((j + 1) * nn * t);
        let (prev_d, next_d) = (&dlo[j * nn * t..], &mut dhi[..nn * t]);
        let mut any = false;
        for node in 0..nn {
            let base = c * nn + node;
            let pij = ct.pi[base];
            let pp = prev_p[node];
            next_p[node] = pp * pij;
            any |= next_p[node] > 0.0;
            let dp = &ct.dpi[base * t..(base + 1) * t];
            for i in 0..t {
                next_d[node * t + i] = prev_d[node * t + i] * pij + pp * dp[i];
            }
        }
        if any {
            factor_dfs(j + 1, d, k, nn, t, terms, pstack, dstack, info, mass);
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn indep_dfs(
    j: usize,
    d: usize,
    k: usize,
    r: usize,
    terms: &[super::likelihood::IndependentTerms],
    stack: &mut [f64],
    info: &mut [f64],
    mass: &mut f64,
) {
    let w = r + 3;
    if j == d {
        let s = &stack[d * w..(d + 1) * w];
        let f = s[0];
        if f <= 0.0 {
            return;
        }
        *mass += f;
        let t = r + 1;
        let g: Vec<f64> = s[1..=r].iter().copied().chain(std::iter::once(s[r + 2])).collect();
        for a in 0..t {
            for b in 0..t {
                info[a * t + b] += g[a] * g[b] / f;
            }
        }
        return;
    }
    let it = &terms[j];
    for c in 0..k {
        let (lo, hi) = stack.split_at_mut((j + 1) * w);
        let prev = &lo[j * w..];
        let next = &mut hi[..w];
        let (fj, dj) = (it.f[c], it.delta[c]);
        next[0] = prev[0] * fj;
        for i in 0..r {
            next[1 + i] = prev[1 + i] * fj + prev[0] * it.df[c * r + i];
        }
        next[r + 1] = prev[r + 1] * fj + prev[0] * dj;
        next[r + 2] = prev[r + 2] * fj + prev[r + 1] * dj;
        indep_dfs(j + 1, d, k, r, terms, stack, info, mass);
    }
}

/// Average information per cluster over the configuration's covariate draws
/// at correlation `rho`.
pub fn fisher_information(config: &EfficiencyConfig, rho: f64) -> Result<DMatrix<f64>> {
    config.validate()?;
    let a = ParameterVector::new(config.beta.clone(), config.gamma.clone())?;
    let clusters = config.clusters()?;
    let parts = clusters
        .par_iter()
        .map(|c| cluster_information(&a, rho, c, config.link))
        .collect::<Result<Vec<_>>>()?;
    let t = a.r() + 1;
    let mut total = DMatrix::zeros(t, t);
    for p in parts {
        total += p;
    }
    Ok(total / config.n as f64)
}

/// One row of the efficiency table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyRow {
    pub d: usize,
    pub rho: f64,
    pub method: Method,
    pub parameter: String,
    /// Asymptotic variance multiplied by `n`.
    pub n_variance: f64,
    /// ML variance over this method's variance.
    pub efficiency: f64,
}

/// `n`-scaled asymptotic variances of ML, WCL and CL for every correlation
/// in the grid, with efficiencies relative to ML.
pub fn asymptotic_variance_table(config: &EfficiencyConfig) -> Result<Vec<EfficiencyRow>> {
    config.validate()?;
    let a = ParameterVector::new(config.beta.clone(), config.gamma.clone())?;
    let clusters = config.clusters()?;
    let n = config.n as f64;
    let opts = FitOptions {
        stage2_cap: config.d.max(FitOptions::default().stage2_cap),
        ..FitOptions::default()
    };
    let mut rows = Vec::new();
    for &rho in &config.rho_grid {
        let corr = CorrelationModel::Exchangeable { rho };
        let names = default_names(a.p(), a.q(), &corr);
        let t = names.len();
        let ml_info = fisher_information(config, rho)?;
        let ml_cov = ml_info
            .clone()
            .try_inverse()
            .ok_or_else(|| WclError::RankDeficient("Fisher information is singular".into()))?;
        let ml: Vec<f64> = (0..t).map(|i| ml_cov[(i, i)]).collect();
        let moments = all_moments(&a, &corr, &clusters, config.link, MomentLevel::Full, &opts)?;
        let optimal = crate::estimator::fit::optimal_from_moments(&clusters, &moments, true)?;
        let wcl = sandwich_from(&moments, &optimal, a.r(), 1, &names)?;
        let cl = sandwich_from(&moments, &WeightSet::Identity, a.r(), 1, &names)?;
        for (method, var) in [
            (Method::Ml, ml.clone()),
            (
                Method::Wcl,
                (0..t).map(|i| n * wcl.covariance[(i, i)]).collect::<Vec<_>>(),
            ),
            (
                Method::Cl,
                (0..t).map(|i| n * cl.covariance[(i, i)]).collect::<Vec<_>>(),
            ),
        ] {
            for i in 0..t {
                rows.push(EfficiencyRow {
                    d: config.d,
                    rho,
                    method,
                    parameter: names[i].clone(),
                    n_variance: var[i],
                    efficiency: ml[i] / var[i],
                });
            }
        }
    }
    Ok(rows)
}

/// Efficiency rows as CSV with columns
/// `d,rho,method,parameter,n_variance,efficiency`.
pub fn table_to_csv(rows: &[EfficiencyRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| WclError::Io(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| WclError::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| WclError::Io(e.to_string()))
}
