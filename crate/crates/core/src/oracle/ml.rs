//! Maximum likelihood fits where the full likelihood is available.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::likelihood::{check_capability, cluster_pmf_grad, full_loglik};
use crate::error::{Result, WclError};
use crate::estimator::solve::{damped_newton, from_eta, to_eta};
use crate::estimator::{default_names, fit_cl, FitDiagnostics, FitOptions, FitReport, Method};
use crate::margins::{LinkFunction, ParameterVector};
use crate::model::{ClusterData, CorrelationKind, CorrelationModel};
use crate::scores::{pairwise_loglik, univariate_loglik};

/// Gradient of the full log-likelihood over `(beta, gamma, theta)`.
pub fn loglik_gradient(
    a: &ParameterVector,
    corr: &CorrelationModel,
    data: &[ClusterData],
    link: LinkFunction,
) -> Result<DVector<f64>> {
    let t = a.r() + corr.n_params();
    let parts = data
        .par_iter()
        .map(|c| {
            let (f, g) = cluster_pmf_grad(a, corr, c, link, true)?;
            if !(f > 0.0) {
                return Err(WclError::DegenerateProbability {
                    value: f,
                    context: format!("joint pmf of cluster '{}'", c.id),
                });
            }
            Ok(DVector::from_iterator(t, g.into_iter().map(|v| v / f)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(parts.into_iter().fold(DVector::zeros(t), |s, g| s + g))
}

fn split(v: &[f64], p: usize, r: usize, template: &CorrelationModel) -> (ParameterVector, CorrelationModel) {
    (ParameterVector::from_slice(&v[..r], p), template.with_theta(&v[r..]))
}

/// Numerical Hessian of the log-likelihood over the natural parameters,
/// by central differences of the gradient.
fn hessian(
    a: &ParameterVector,
    corr: &CorrelationModel,
    data: &[ClusterData],
    link: LinkFunction,
) -> Result<DMatrix<f64>> {
    let mut v = a.to_vec();
    v.extend(corr.theta());
    let (p, r) = (a.p(), a.r());
    let t = v.len();
    let mut h = DMatrix::zeros(t, t);
    for i in 0..t {
        let step = 1e-5 * v[i].abs().max(1.0);
        let mut up = v.clone();
        let mut dn = v.clone();
        up[i] += step;
        dn[i] -= step;
        let (au, cu) = split(&up, p, r, corr);
        let (ad, cd) = split(&dn, p, r, corr);
        let gu = loglik_gradient(&au, &cu, data, link)?;
        let gd = loglik_gradient(&ad, &cd, data, link)?;
        h.set_column(i, &((gu - gd) / (2.0 * step)));
    }
    Ok((&h + h.transpose()) * 0.5)
}

/// Maximizes the full likelihood, starting from the composite likelihood
/// estimates, by damped Newton on the score in transformed coordinates.
/// Standard errors come from the inverse numerical Hessian.
pub fn ml_fit(data: &[ClusterData], link: LinkFunction, kind: CorrelationKind, opts: &FitOptions) -> Result<FitReport> {
    let dmax = data.iter().map(|c| c.len()).max().unwrap_or(0);
    let probe = match kind {
        CorrelationKind::Exchangeable => CorrelationModel::Exchangeable { rho: 0.0 },
        _ => CorrelationModel::independent(kind, dmax),
    };
    check_capability(&probe, dmax)?;
    let start = fit_cl(data, link, kind, opts).map_err(|e| e.at_stage("ml start"))?;
    let template = start.correlation.clone();
    if let CorrelationModel::Exchangeable { rho } = template {
        if rho < 0.0 && dmax > super::likelihood::EXACT_MAX_DIM {
            return Err(WclError::Capability(
                "full likelihood for negative exchangeable correlation needs at most 4 coordinates".into(),
            ));
        }
    }
    let a0 = start.estimates.clone();
    let (p, r) = (a0.p(), a0.r());
    let nt = template.n_params();
    let decode = |eta: &[f64]| -> (ParameterVector, CorrelationModel) {
        (from_eta(&eta[..r], p), template.from_unconstrained(&eta[r..]))
    };
    let transformed_gradient = |eta: &[f64]| -> Result<DVector<f64>> {
        if eta.iter().any(|v| !v.is_finite()) {
            return Err(WclError::Domain("non-finite iterate".into()));
        }
        let (a, c) = decode(eta);
        if let CorrelationModel::Exchangeable { rho } = c {
            if rho < 0.0 && dmax > super::likelihood::EXACT_MAX_DIM {
                return Err(WclError::Boundary("negative exchangeable correlation".into()));
            }
        }
        let g = loglik_gradient(&a, &c, data, link)?;
        // chain rule through the transforms
        let mut out = DVector::zeros(r + nt);
        for i in 0..p {
            out[i] = g[i];
        }
        let q = r - p;
        for m in 0..q {
            // alpha_m depends on eta_p and on eta_{p+l} for 1 <= l <= m
            out[p] += g[p + m];
            for l in 1..=m {
                out[p + l] += g[p + m] * eta[p + l].exp();
            }
        }
        for (i, th) in c.theta().iter().enumerate() {
            out[r + i] = g[r + i] * (1.0 - th * th);
        }
        Ok(out)
    };
    let eval = |eta: &[f64]| -> Result<(DVector<f64>, DMatrix<f64>)> {
        let g = transformed_gradient(eta)?;
        let t = eta.len();
        let mut jac = DMatrix::zeros(t, t);
        for i in 0..t {
            let step = 1e-5;
            let mut up = eta.to_vec();
            let mut dn = eta.to_vec();
            up[i] += step;
            dn[i] -= step;
            let col = (transformed_gradient(&up)? - transformed_gradient(&dn)?) / (2.0 * step);
            jac.set_column(i, &col);
        }
        Ok((g, (&jac + jac.transpose()) * 0.5))
    };
    let mut eta0 = to_eta(&a0);
    eta0.extend(template.to_unconstrained());
    let ml_opts = FitOptions {
        tolerance: opts.tolerance.max(1e-6),
        ..opts.clone()
    };
    let (eta, info) = damped_newton(eta0, eval, &ml_opts).map_err(|e| e.at_stage("ml"))?;
    let (a, corr) = decode(&eta);
    let h = hessian(&a, &corr, data, link).map_err(|e| e.at_stage("ml hessian"))?;
    let names = default_names(a.p(), a.q(), &corr);
    let cov = (-h)
        .try_inverse()
        .ok_or_else(|| WclError::RankDeficient("observed information is singular".into()))?;
    let mut diagnostics = FitDiagnostics::new(None);
    diagnostics.stage1_iterations = info.iterations;
    diagnostics.stage1_score_norm = info.score_norm;
    diagnostics.theta_se_available = true;
    diagnostics.model_based_j = false;
    let se = (0..names.len())
        .map(|i| {
            let v = cov[(i, i)];
            (v > 0.0).then(|| v.sqrt())
        })
        .collect();
    let t = names.len();
    Ok(FitReport {
        method: Method::Ml,
        link,
        estimates: a.clone(),
        correlation: corr.clone(),
        names,
        se,
        covariance: (0..t).map(|i| (0..t).map(|j| cov[(i, j)]).collect()).collect(),
        n_clusters: data.len(),
        n_observations: data.iter().map(|c| c.len()).sum(),
        l1: univariate_loglik(&a, data, link)?,
        l2: pairwise_loglik(&a, &corr, data, link)?,
        loglik: Some(full_loglik(&a, &corr, data, link)?),
        diagnostics,
    })
}
