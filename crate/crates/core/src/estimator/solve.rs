//! Damped Fisher-scoring solvers for the two estimating equations.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::FitOptions;
use crate::error::{Result, WclError};
use crate::margins::{LinkFunction, ParameterVector};
use crate::model::{ClusterData, CorrelationModel};
use crate::scores::{pair_jacobian, pair_scores, ClusterEval, WeightSet};

/// Iterations used and final sup-norm of the equations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveInfo {
    pub iterations: usize,
    pub score_norm: f64,
}

fn sup(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

fn newton_step(jac: &DMatrix<f64>, g: &DVector<f64>, eta: &[f64]) -> Result<DVector<f64>> {
    match jac.clone().lu().solve(&(-g)) {
        Some(s) if s.iter().all(|v| v.is_finite()) => Ok(s),
        _ => Err(WclError::RankDeficient(format!(
            "equation Jacobian is singular at iterate {eta:?}"
        ))),
    }
}

/// Forward-difference Jacobian of the equations.
fn numerical_jacobian<F>(eval: &F, eta: &[f64], g: &DVector<f64>) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<(DVector<f64>, DMatrix<f64>)>,
{
    let mut jac = DMatrix::zeros(g.len(), eta.len());
    for c in 0..eta.len() {
        let h = 1e-7 * eta[c].abs().max(1.0);
        let mut e = eta.to_vec();
        e[c] += h;
        let (gc, _) = eval(&e)?;
        jac.set_column(c, &((gc - g) / h));
    }
    Ok(jac)
}

/// Backtracking from `eta` along `step` until `|g|_2` drops below `merit`.
fn line_search<F>(
    eval: &F,
    eta: &[f64],
    step: &DVector<f64>,
    merit: f64,
) -> Option<(Vec<f64>, DVector<f64>, DMatrix<f64>)>
where
    F: Fn(&[f64]) -> Result<(DVector<f64>, DMatrix<f64>)>,
{
    let mut lambda = 1.0;
    for _ in 0..=30 {
        let trial: Vec<f64> = eta.iter().zip(step.iter()).map(|(e, s)| e + lambda * s).collect();
        if let Ok((g2, j2)) = eval(&trial) {
            if g2.iter().all(|v| v.is_finite()) && g2.norm() < merit {
                return Some((trial, g2, j2));
            }
        }
        lambda *= 0.5;
    }
    None
}

/// Newton iteration on `g(eta) = 0` with step halving on `|g|_2`.
/// `eval` returns the equations and a Jacobian in `eta`, which may be an
/// expectation; when its step cannot reduce `|g|_2` the step is retried
/// once with a finite-difference Jacobian. Slow progress with the supplied
/// Jacobian (under half the residual removed per step) switches to the
/// finite-difference one for the remaining iterations.
pub(crate) fn damped_newton<F>(eta0: Vec<f64>, eval: F, opts: &FitOptions) -> Result<(Vec<f64>, SolveInfo)>
where
    F: Fn(&[f64]) -> Result<(DVector<f64>, DMatrix<f64>)>,
{
    let mut eta = eta0;
    let (mut g, mut jac) = eval(&eta)?;
    let mut exact_jacobian = false;
    for it in 0..opts.max_iterations {
        let norm = sup(&g);
        if norm <= opts.tolerance {
            return Ok((
                eta,
                SolveInfo {
                    iterations: it,
                    score_norm: norm,
                },
            ));
        }
        let merit = g.norm();
        if exact_jacobian {
            jac = numerical_jacobian(&eval, &eta, &g)?;
        }
        let step = newton_step(&jac, &g, &eta)?;
        let mut next = line_search(&eval, &eta, &step, merit);
        if next.is_none() {
            let exact = numerical_jacobian(&eval, &eta, &g)?;
            if let Ok(step) = newton_step(&exact, &g, &eta) {
                next = line_search(&eval, &eta, &step, merit);
            }
        }
        match next {
            Some((e, g2, j2)) => {
                exact_jacobian |= g2.norm() > 0.5 * merit;
                eta = e;
                g = g2;
                jac = j2;
            }
            None if norm <= 10.0 * opts.tolerance => {
                return Ok((
                    eta,
                    SolveInfo {
                        iterations: it,
                        score_norm: norm,
                    },
                ));
            }
            None => {
                return Err(WclError::NoConvergence {
                    iterations: it,
                    score_norm: norm,
                    last_iterate: eta,
                })
            }
        }
    }
    let norm = sup(&g);
    if norm <= 10.0 * opts.tolerance {
        return Ok((
            eta,
            SolveInfo {
                iterations: opts.max_iterations,
                score_norm: norm,
            },
        ));
    }
    Err(WclError::NoConvergence {
        iterations: opts.max_iterations,
        score_norm: norm,
        last_iterate: eta,
    })
}

/// `(beta, alpha_1, log(alpha_2 - alpha_1), ...)`.
pub(crate) fn to_eta(a: &ParameterVector) -> Vec<f64> {
    let mut v = a.beta.clone();
    v.push(a.gamma[0]);
    for w in a.gamma.windows(2) {
        v.push((w[1] - w[0]).ln());
    }
    v
}

pub(crate) fn from_eta(eta: &[f64], p: usize) -> ParameterVector {
    let mut gamma = Vec::with_capacity(eta.len() - p);
    let mut g = eta[p];
    gamma.push(g);
    for e in &eta[p + 1..] {
        g += e.exp();
        gamma.push(g);
    }
    ParameterVector {
        beta: eta[..p].to_vec(),
        gamma,
    }
}

/// `d a / d eta`.
fn eta_jacobian(eta: &[f64], p: usize) -> DMatrix<f64> {
    let r = eta.len();
    let mut d = DMatrix::zeros(r, r);
    for i in 0..=p {
        d[(i, i)] = 1.0;
    }
    for m in 1..(r - p) {
        d[(p + m, p)] = 1.0;
        for l in 1..=m {
            d[(p + m, p + l)] = eta[p + l].exp();
        }
    }
    d
}

/// Weighted univariate equations `sum_i A1_i s1_i(a)` and their expected
/// Jacobian `sum_i A1_i psi1_i(a)`.
pub(crate) fn stage1_equations(
    a: &ParameterVector,
    data: &[ClusterData],
    link: LinkFunction,
    weights: &WeightSet,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let r = a.r();
    let parts: Vec<Result<(DVector<f64>, DMatrix<f64>)>> = data
        .par_iter()
        .enumerate()
        .map(|(i, c)| {
            let e = ClusterEval::new(a, c, link)?;
            let s1 = e.s1();
            Ok(match weights {
                WeightSet::Identity => (e.xt_times(&s1), e.xt_psi1()),
                WeightSet::Clusters(w) => (&w[i].a1 * s1, &w[i].a1 * e.psi1()),
            })
        })
        .collect();
    let mut g = DVector::zeros(r);
    let mut jac = DMatrix::zeros(r, r);
    for part in parts {
        let (gi, ji) = part?;
        g += gi;
        jac += ji;
    }
    Ok((g, jac))
}

/// Solves the (weighted) univariate composite score equations for `a`.
pub fn solve_stage1(
    data: &[ClusterData],
    link: LinkFunction,
    weights: &WeightSet,
    init: &ParameterVector,
    opts: &FitOptions,
) -> Result<(ParameterVector, SolveInfo)> {
    init.validate()?;
    let p = init.p();
    let eval = |eta: &[f64]| -> Result<(DVector<f64>, DMatrix<f64>)> {
        if eta.iter().any(|v| !v.is_finite()) {
            return Err(WclError::Domain("non-finite iterate".into()));
        }
        let a = from_eta(eta, p);
        let (g, jac) = stage1_equations(&a, data, link, weights)?;
        Ok((g, jac * eta_jacobian(eta, p)))
    };
    let (eta, info) = damped_newton(to_eta(init), eval, opts)?;
    let a = from_eta(&eta, p);
    if a.gamma.windows(2).any(|w| w[1] - w[0] < 1e-8) || a.validate().is_err() {
        return Err(WclError::Domain(format!("cutpoints collapsed: {:?}", a.gamma)));
    }
    Ok((a, info))
}

/// Weighted pairwise equations in `theta` and their expected Jacobian.
pub(crate) fn stage2_equations(
    evals: &[ClusterEval],
    pairs: &[Vec<(usize, usize)>],
    corr: &CorrelationModel,
    weights: &WeightSet,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let nt = corr.n_params();
    let parts: Vec<Result<(DVector<f64>, DMatrix<f64>)>> = evals
        .par_iter()
        .zip(pairs.par_iter())
        .enumerate()
        .map(|(i, (e, pr))| {
            if pr.is_empty() {
                return Ok((DVector::zeros(nt), DMatrix::zeros(nt, nt)));
            }
            let ps = pair_scores(e, corr, pr)?;
            let c = pair_jacobian(corr, &e.cluster.coords, pr);
            let s = DVector::from_vec(ps.score);
            let mut ic = c.clone();
            for (row, info) in ps.information.iter().enumerate() {
                ic.row_mut(row).scale_mut(-info);
            }
            Ok(match weights {
                WeightSet::Clusters(w) if w[i].stage2_optimal => (&w[i].a2 * s, &w[i].a2 * ic),
                _ => (c.transpose() * s, c.transpose() * ic),
            })
        })
        .collect();
    let mut g = DVector::zeros(nt);
    let mut jac = DMatrix::zeros(nt, nt);
    for part in parts {
        let (gi, ji) = part?;
        g += gi;
        jac += ji;
    }
    Ok((g, jac))
}

/// Solves the (weighted) pairwise equations for the correlation parameters
/// with the univariate parameters fixed at `a_hat`; `corr` supplies the
/// structure and the starting value.
pub fn solve_stage2(
    a_hat: &ParameterVector,
    corr: &CorrelationModel,
    data: &[ClusterData],
    link: LinkFunction,
    weights: &WeightSet,
    opts: &FitOptions,
) -> Result<(CorrelationModel, SolveInfo)> {
    for c in data {
        corr.check_coords(&c.coords)?;
    }
    let evals = data
        .iter()
        .map(|c| ClusterEval::new(a_hat, c, link))
        .collect::<Result<Vec<_>>>()?;
    let pairs: Vec<Vec<(usize, usize)>> = data.iter().map(|c| c.pairs(opts.max_lag)).collect();
    if pairs.iter().all(|p| p.is_empty()) {
        return Err(WclError::Capability(
            "no within-cluster pairs to estimate the correlation".into(),
        ));
    }
    let eval = |eta: &[f64]| -> Result<(DVector<f64>, DMatrix<f64>)> {
        if eta.iter().any(|v| !v.is_finite()) {
            return Err(WclError::Domain("non-finite iterate".into()));
        }
        let cm = corr.from_unconstrained(eta);
        let (g, mut jac) = stage2_equations(&evals, &pairs, &cm, weights)?;
        for (col, th) in cm.theta().iter().enumerate() {
            jac.column_mut(col).scale_mut(1.0 - th * th);
        }
        Ok((g, jac))
    };
    let (eta, info) = damped_newton(corr.to_unconstrained(), eval, opts)?;
    Ok((corr.from_unconstrained(&eta), info))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cutpoint_transform_round_trips() {
        let a = ParameterVector::new(vec![0.3], vec![-1.0, 0.2, 1.5]).unwrap();
        let back = from_eta(&to_eta(&a), 1);
        for (x, y) in a.to_vec().iter().zip(back.to_vec()) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn transform_jacobian_matches_differences() {
        let eta = vec![0.3, -1.0, 0.1, -0.4];
        let d = eta_jacobian(&eta, 1);
        for c in 0..eta.len() {
            let mut up = eta.clone();
            let mut dn = eta.clone();
            up[c] += 1e-6;
            dn[c] -= 1e-6;
            let (u, l) = (from_eta(&up, 1).to_vec(), from_eta(&dn, 1).to_vec());
            for r in 0..eta.len() {
                assert!((d[(r, c)] - (u[r] - l[r]) / 2e-6).abs() < 1e-8);
            }
        }
    }
}
