//! Composite scores of the univariate and bivariate likelihoods, their
//! covariances and expected derivatives, and the Godambe pieces of the
//! weighted estimating equations.

pub mod cluster;
pub mod moments;
pub mod pair;
pub mod weights;

use nalgebra::{DMatrix, DVector};

pub use cluster::{pair_jacobian, pair_scores, ClusterEval, PairScores};
pub use moments::{cluster_moments, HigherOrderRoute, MomentLevel, MomentMatrices};
pub use pair::{pair_pmf, pair_rho_score, PairTable};
pub use weights::{ClusterWeights, GodambePieces, WeightSet};

use crate::error::{Result, WclError};
use crate::margins::{LinkFunction, ParameterVector};
use crate::model::{ClusterData, CorrelationModel};

/// `g1 = sum_i X_i^T s1_i`, the gradient of the univariate log-likelihood.
pub fn univariate_composite_score(
    a: &ParameterVector,
    data: &[ClusterData],
    link: LinkFunction,
) -> Result<DVector<f64>> {
    let mut g = DVector::zeros(a.r());
    for c in data {
        let e = ClusterEval::new(a, c, link)?;
        g += e.xt_times(&e.s1());
    }
    Ok(g)
}

/// `g2 = sum_i C_i^T s2_i` over the correlation parameters, the gradient of
/// the pairwise log-likelihood at fixed margins.
pub fn bivariate_composite_score(
    a: &ParameterVector,
    corr: &CorrelationModel,
    data: &[ClusterData],
    link: LinkFunction,
) -> Result<DVector<f64>> {
    let mut g = DVector::zeros(corr.n_params());
    for c in data {
        corr.check_coords(&c.coords)?;
        let e = ClusterEval::new(a, c, link)?;
        let pairs = c.pairs(None);
        let s = pair_scores(&e, corr, &pairs)?;
        let jac = pair_jacobian(corr, &c.coords, &pairs);
        g += jac.transpose() * DVector::from_vec(s.score);
    }
    Ok(g)
}

/// Sum of univariate log-likelihoods.
pub fn univariate_loglik(a: &ParameterVector, data: &[ClusterData], link: LinkFunction) -> Result<f64> {
    data.iter().map(|c| ClusterEval::new(a, c, link).map(|e| e.l1())).sum()
}

/// Sum of pairwise log-likelihoods over all within-cluster pairs.
pub fn pairwise_loglik(
    a: &ParameterVector,
    corr: &CorrelationModel,
    data: &[ClusterData],
    link: LinkFunction,
) -> Result<f64> {
    let mut l = 0.0;
    for c in data {
        corr.check_coords(&c.coords)?;
        let e = ClusterEval::new(a, c, link)?;
        l += pair_scores(&e, corr, &c.pairs(None))?.l2;
    }
    Ok(l)
}

fn full_moments(
    a: &ParameterVector,
    corr: &CorrelationModel,
    cluster: &ClusterData,
    link: LinkFunction,
) -> Result<MomentMatrices> {
    let e = ClusterEval::new(a, cluster, link)?;
    cluster_moments(
        &e,
        corr,
        &cluster.pairs(None),
        MomentLevel::Full,
        HigherOrderRoute::Auto,
    )
}

/// `Cov(s1)` of one cluster.
pub fn omega1_matrix(
    a: &ParameterVector,
    corr: &CorrelationModel,
    cluster: &ClusterData,
    link: LinkFunction,
) -> Result<DMatrix<f64>> {
    let e = ClusterEval::new(a, cluster, link)?;
    Ok(cluster_moments(&e, corr, &[], MomentLevel::Univariate, HigherOrderRoute::Auto)?.omega1)
}

/// `Cov(s1, s2)` of one cluster.
pub fn omega_cross_matrix(
    a: &ParameterVector,
    corr: &CorrelationModel,
    cluster: &ClusterData,
    link: LinkFunction,
) -> Result<DMatrix<f64>> {
    Ok(full_moments(a, corr, cluster, link)?.omega12.expect("full level"))
}

/// `Cov(s2)` of one cluster.
pub fn omega2_matrix(
    a: &ParameterVector,
    corr: &CorrelationModel,
    cluster: &ClusterData,
    link: LinkFunction,
) -> Result<DMatrix<f64>> {
    Ok(full_moments(a, corr, cluster, link)?.omega2.expect("full level"))
}

/// Expected score derivatives of one cluster.
#[derive(Debug, Clone)]
pub struct PsiDelta {
    pub psi1: DMatrix<f64>,
    pub psi21: DMatrix<f64>,
    pub delta2: DMatrix<f64>,
}

pub fn psi_delta_matrices(
    a: &ParameterVector,
    corr: &CorrelationModel,
    cluster: &ClusterData,
    link: LinkFunction,
) -> Result<PsiDelta> {
    let m = full_moments(a, corr, cluster, link)?;
    Ok(PsiDelta {
        psi1: m.psi1,
        psi21: m.psi21.expect("full level"),
        delta2: m.delta2.expect("full level"),
    })
}

/// `J` and `H` of the stacked weighted equations, summed over clusters.
pub fn assemble_j_h(
    a: &ParameterVector,
    corr: &CorrelationModel,
    data: &[ClusterData],
    weights: &WeightSet,
    link: LinkFunction,
) -> Result<GodambePieces> {
    if let WeightSet::Clusters(w) = weights {
        if w.len() != data.len() {
            return Err(WclError::Domain(format!(
                "{} weight actions for {} clusters",
                w.len(),
                data.len()
            )));
        }
    }
    let mut out = GodambePieces::zeros(a.r(), corr.n_params());
    for (i, c) in data.iter().enumerate() {
        let e = ClusterEval::new(a, c, link)?;
        let m = cluster_moments(&e, corr, &c.pairs(None), MomentLevel::Full, HigherOrderRoute::Auto)?;
        match weights {
            WeightSet::Identity => out.add(&ClusterWeights::identity(&e.design(), &m), &m),
            WeightSet::Clusters(w) => {
                let w = &w[i];
                if w.a1.ncols() != m.omega1.nrows() || w.a2.ncols() != m.pairs.len() {
                    return Err(WclError::Domain(format!(
                        "weight actions of cluster '{}' do not conform",
                        c.id
                    )));
                }
                out.add(w, &m)
            }
        }
    }
    Ok(out)
}
