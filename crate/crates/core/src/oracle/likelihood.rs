//! Joint pmf of a whole cluster and its gradient.
//!
//! Exchangeable correlation with `rho > 0` uses the one-factor integral and
//! analytic derivatives under the integral; `rho = 0` uses the factorized
//! pmf, whose correlation derivative is a sum over pairs. Other structures
//! with at most four coordinates use exact rectangles with central
//! differences.

use crate::error::{Result, WclError};
use crate::kernels::normal::{cdf, pdf};
use crate::kernels::quadrature::QuadratureSpec;
use crate::kernels::{rectangle_small, FactorRule, SmallCorr};
use crate::margins::{LinkFunction, MarginEval, ParameterVector};
use crate::model::{ClusterData, CorrelationModel};

/// Largest cluster the exact (non-exchangeable) path handles.
pub const EXACT_MAX_DIM: usize = 4;

/// Quadrature for the factor integral in the likelihood: 12 panels of 12
/// Gauss-Legendre nodes on `[-8.5, 8.5]`.
pub(crate) fn likelihood_rule() -> FactorRule {
    FactorRule::new(&QuadratureSpec {
        panel_count: 12,
        nodes_per_panel: 12,
        half_width: 8.5,
    })
}

/// Per-coordinate conditional category probabilities and their gradients
/// over `(beta, gamma, rho)` at every factor node.
pub(crate) struct CoordinateTerms {
    /// `pi[c * n_nodes + node]`.
    pub pi: Vec<f64>,
    /// `dpi[(c * n_nodes + node) * t + param]`.
    pub dpi: Vec<f64>,
}

pub(crate) fn coordinate_terms(m: &MarginEval, x: &[f64], rho: f64, nodes: &[f64], n_params: usize) -> CoordinateTerms {
    let k = m.pmf.len();
    let q = k - 1;
    let p = x.len();
    let t = n_params;
    let nn = nodes.len();
    let (sr, sc) = (rho.sqrt(), (1.0 - rho).sqrt());
    let mut pi = vec![0.0; k * nn];
    let mut dpi = vec![0.0; k * nn * t];
    for (node, &w) in nodes.iter().enumerate() {
        // standardized thresholds and their densities
        let u: Vec<f64> =
            m.z.iter()
                .map(|&z| if z.is_infinite() { z } else { (z - sr * w) / sc })
                .collect();
        let phi: Vec<f64> = u.iter().map(|&v| pdf(v)).collect();
        let du_drho: Vec<f64> = u
            .iter()
            .map(|&v| {
                if v.is_infinite() {
                    0.0
                } else {
                    -w / (2.0 * sr * sc) + v / (2.0 * (1.0 - rho))
                }
            })
            .collect();
        for c in 0..k {
            let base = c * nn + node;
            pi[base] = (cdf(u[c + 1]) - cdf(u[c])).max(0.0);
            let d = &mut dpi[base * t..(base + 1) * t];
            // upper threshold c+1 is interior when c < q, lower threshold c when c > 0
            let mut dg = [(0usize, 0.0f64); 2];
            if c < q {
                dg[0] = (c, phi[c + 1] / sc * m.slope[c]);
            }
            if c > 0 {
                dg[1] = (c - 1, -phi[c] / sc * m.slope[c - 1]);
            }
            for &(gm, v) in &dg {
                if v == 0.0 {
                    continue;
                }
                for b in 0..p {
                    d[b] += x[b] * v;
                }
                d[p + gm] += v;
            }
            d[p + q] = phi[c + 1] * du_drho[c + 1] - phi[c] * du_drho[c];
        }
    }
    CoordinateTerms { pi, dpi }
}

/// Independence version: category probabilities, their gradients over
/// `(beta, gamma)` and the density differences `phi(z_hi) - phi(z_lo)`.
pub(crate) struct IndependentTerms {
    pub f: Vec<f64>,
    /// `df[c * r + param]`.
    pub df: Vec<f64>,
    pub delta: Vec<f64>,
}

pub(crate) fn independent_terms(m: &MarginEval, x: &[f64]) -> IndependentTerms {
    let k = m.pmf.len();
    let q = k - 1;
    let p = x.len();
    let r = p + q;
    let mut df = vec![0.0; k * r];
    for c in 0..k {
        for (gm, v) in m.score_entries(c) {
            let v = v * m.pmf[c];
            if v == 0.0 {
                continue;
            }
            for b in 0..p {
                df[c * r + b] += x[b] * v;
            }
            df[c * r + p + gm] += v;
        }
    }
    IndependentTerms {
        f: m.pmf.clone(),
        df,
        delta: (0..k).map(|c| pdf(m.z[c + 1]) - pdf(m.z[c])).collect(),
    }
}

fn margins(a: &ParameterVector, cluster: &ClusterData, link: LinkFunction) -> Result<Vec<MarginEval>> {
    cluster
        .x
        .iter()
        .map(|x| {
            let nu = a.predictor(x);
            let g: Vec<f64> = a.gamma.iter().map(|v| v + nu).collect();
            MarginEval::new(&g, link)
        })
        .collect()
}

/// Checks that the full likelihood is available for this structure and
/// cluster size.
pub fn check_capability(corr: &CorrelationModel, d: usize) -> Result<()> {
    match corr {
        CorrelationModel::Exchangeable { rho } if *rho >= 0.0 => Ok(()),
        _ if d <= EXACT_MAX_DIM => Ok(()),
        _ => Err(WclError::Capability(format!(
            "full likelihood for {} correlation needs at most {EXACT_MAX_DIM} coordinates per cluster, got {d}",
            corr.kind()
        ))),
    }
}

fn exact_pmf(ms: &[MarginEval], y: &[usize], corr: &CorrelationModel, coords: &[usize]) -> Result<f64> {
    let r = corr.matrix(coords);
    let sc = SmallCorr::from_matrix(&r)?;
    if r.clone().cholesky().is_none() {
        return Err(WclError::Domain("latent correlation is not positive definite".into()));
    }
    let lo: Vec<f64> = ms.iter().zip(y).map(|(m, &c)| m.z[c - 1]).collect();
    let hi: Vec<f64> = ms.iter().zip(y).map(|(m, &c)| m.z[c]).collect();
    Ok(rectangle_small(&lo, &hi, &sc))
}

/// Joint probability of the observed responses of one cluster.
pub fn cluster_pmf(
    a: &ParameterVector,
    corr: &CorrelationModel,
    cluster: &ClusterData,
    link: LinkFunction,
) -> Result<f64> {
    Ok(cluster_pmf_grad(a, corr, cluster, link, false)?.0)
}

/// Joint probability and, when `grad` is set, its gradient over
/// `(beta, gamma, theta)`.
pub fn cluster_pmf_grad(
    a: &ParameterVector,
    corr: &CorrelationModel,
    cluster: &ClusterData,
    link: LinkFunction,
    grad: bool,
) -> Result<(f64, Vec<f64>)> {
    let d = cluster.len();
    check_capability(corr, d)?;
    corr.check_coords(&cluster.coords)?;
    let ms = margins(a, cluster, link)?;
    let r = a.r();
    match corr {
        CorrelationModel::Exchangeable { rho } if *rho == 0.0 => {
            // factorized pmf; the correlation derivative sums over pairs
            let (mut f, mut e1, mut e2) = (1.0, 0.0, 0.0);
            let mut df = vec![0.0; r];
            for (j, m) in ms.iter().enumerate() {
                let it = independent_terms(m, &cluster.x[j]);
                let c = cluster.y[j] - 1;
                let (fj, dj) = (it.f[c], it.delta[c]);
                for (i, v) in df.iter_mut().enumerate() {
                    *v = *v * fj + f * it.df[c * r + i];
                }
                e2 = e2 * fj + e1 * dj;
                e1 = e1 * fj + f * dj;
                f *= fj;
            }
            df.push(e2);
            Ok((f, df))
        }
        CorrelationModel::Exchangeable { rho } => {
            let rule = likelihood_rule();
            let t = r + 1;
            let nn = rule.len();
            let mut pv: Vec<f64> = rule.weights.clone();
            let mut dv = vec![0.0; nn * t];
            for (j, m) in ms.iter().enumerate() {
                let ct = coordinate_terms(m, &cluster.x[j], *rho, &rule.nodes, t);
                let c = cluster.y[j] - 1;
                for node in 0..nn {
                    let base = c * nn + node;
                    let pij = ct.pi[base];
                    for i in 0..t {
                        dv[node * t + i] = dv[node * t + i] * pij + pv[node] * ct.dpi[base * t + i];
                    }
                    pv[node] *= pij;
                }
            }
            let f = pv.iter().sum();
            let mut g = vec![0.0; t];
            for node in 0..nn {
                for i in 0..t {
                    g[i] += dv[node * t + i];
                }
            }
            Ok((f, g))
        }
        _ => {
            let f = exact_pmf(&ms, &cluster.y, corr, &cluster.coords)?;
            if !grad {
                return Ok((f, vec![]));
            }
            let av = a.to_vec();
            let th = corr.theta();
            let mut g = Vec::with_capacity(r + th.len());
            let h = 1e-6;
            for i in 0..r + th.len() {
                let eval = |delta: f64| -> Result<f64> {
                    if i < r {
                        let mut v = av.clone();
                        v[i] += delta;
                        let b = ParameterVector::from_slice(&v, a.p());
                        exact_pmf(&margins(&b, cluster, link)?, &cluster.y, corr, &cluster.coords)
                    } else {
                        let mut v = th.clone();
                        v[i - r] += delta;
                        exact_pmf(&ms, &cluster.y, &corr.with_theta(&v), &cluster.coords)
                    }
                };
                g.push((eval(h)? - eval(-h)?) / (2.0 * h));
            }
            Ok((f, g))
        }
    }
}

/// `sum_i log f_d(y_i)`.
pub fn full_loglik(
    a: &ParameterVector,
    corr: &CorrelationModel,
    data: &[ClusterData],
    link: LinkFunction,
) -> Result<f64> {
    let mut l = 0.0;
    for c in data {
        let f = cluster_pmf(a, corr, c, link)?;
        if !(f > 0.0) {
            return Err(WclError::DegenerateProbability {
                value: f,
                context: format!("joint pmf of cluster '{}'", c.id),
            });
        }
        l += f.ln();
    }
    Ok(l)
}
