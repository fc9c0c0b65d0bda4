//! The estimation pipeline: unweighted fit, weights at the current
//! estimates, weighted refits, and sandwich covariances.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::solve::{solve_stage1, solve_stage2, SolveInfo};
use super::{default_names, FitDiagnostics, FitOptions, FitReport, Method};
use crate::error::{Result, WclError};
use crate::kernels::normal::pdf;
use crate::margins::{LinkFunction, ParameterVector};
use crate::model::{dataset_shape, pair_index, ClusterData, CorrelationKind, CorrelationModel};
use crate::scores::{
    cluster_moments, pair_scores, ClusterEval, ClusterWeights, GodambePieces, HigherOrderRoute, MomentLevel,
    MomentMatrices, WeightSet,
};

/// Starting values: no covariate effects and cutpoints matching the
/// pooled cumulative category frequencies.
pub fn initial_parameters(data: &[ClusterData], link: LinkFunction) -> Result<ParameterVector> {
    let (p, k) = dataset_shape(data)?;
    if k < 2 {
        return Err(WclError::Domain("at least two response categories are needed".into()));
    }
    let mut counts = vec![0usize; k];
    for c in data {
        for &y in &c.y {
            counts[y - 1] += 1;
        }
    }
    let total: usize = counts.iter().sum();
    if let Some(empty) = counts.iter().position(|&n| n == 0) {
        return Err(WclError::Domain(format!("category {} is never observed", empty + 1)));
    }
    let mut cum = 0usize;
    let gamma = counts[..k - 1]
        .iter()
        .map(|n| {
            cum += n;
            link.quantile(cum as f64 / total as f64)
        })
        .collect();
    ParameterVector::new(vec![0.0; p], gamma)
}

fn unstructured_dim(data: &[ClusterData]) -> usize {
    data.iter().filter_map(|c| c.coords.last()).max().map_or(0, |m| m + 1)
}

/// Starting correlation from products of generalized residuals
/// `E(Z | Y)` at the univariate estimates, clipped to `|rho| <= 0.95`.
/// Structured models pool over pairs; AR1 uses the shortest available lag.
pub fn initial_correlation(
    a: &ParameterVector,
    kind: CorrelationKind,
    data: &[ClusterData],
    link: LinkFunction,
    max_lag: Option<usize>,
) -> Result<CorrelationModel> {
    let dim = unstructured_dim(data);
    let slots = match kind {
        CorrelationKind::Unstructured => dim * dim.saturating_sub(1) / 2,
        CorrelationKind::Exchangeable => 1,
        CorrelationKind::Ar1 => dim.max(2),
    };
    // sums of m_j m_k, m_j^2, m_k^2 per slot
    let mut acc = vec![[0.0f64; 3]; slots];
    for c in data {
        let e = ClusterEval::new(a, c, link)?;
        let m: Vec<f64> = e
            .margins
            .iter()
            .enumerate()
            .map(|(j, mg)| {
                let y = e.obs(j);
                (pdf(mg.z[y]) - pdf(mg.z[y + 1])) / mg.pmf[y]
            })
            .collect();
        for (j, k) in c.pairs(max_lag) {
            let (cj, ck) = (c.coords[j], c.coords[k]);
            let s = match kind {
                CorrelationKind::Unstructured => pair_index(dim, cj, ck),
                CorrelationKind::Exchangeable => 0,
                CorrelationKind::Ar1 => ck - cj,
            };
            acc[s][0] += m[j] * m[k];
            acc[s][1] += m[j] * m[j];
            acc[s][2] += m[k] * m[k];
        }
    }
    let ratio = |s: &[f64; 3]| {
        let den = (s[1] * s[2]).sqrt();
        if den > 0.0 {
            Some((s[0] / den).clamp(-0.95, 0.95))
        } else {
            None
        }
    };
    Ok(match kind {
        CorrelationKind::Unstructured => CorrelationModel::Unstructured {
            dim,
            rho: acc.iter().map(|s| ratio(s).unwrap_or(0.0)).collect(),
        },
        CorrelationKind::Exchangeable => CorrelationModel::Exchangeable {
            rho: ratio(&acc[0]).unwrap_or(0.0),
        },
        CorrelationKind::Ar1 => {
            let rho = acc
                .iter()
                .enumerate()
                .skip(1)
                .find_map(|(lag, s)| ratio(s).map(|v| v.signum() * v.abs().powf(1.0 / lag as f64)))
                .unwrap_or(0.0);
            CorrelationModel::Ar1 { rho }
        }
    })
}

/// For one-parameter structures, the best of the residual start and a
/// coarse grid by pairwise log-likelihood. The pairwise score need not be
/// monotone between a poor start and its root.
fn refine_single_parameter(
    a: &ParameterVector,
    start: CorrelationModel,
    data: &[ClusterData],
    link: LinkFunction,
    max_lag: Option<usize>,
) -> CorrelationModel {
    let grid: Vec<f64> = (-9..=9).map(|i| i as f64 / 10.0).chain([0.95, 0.98]).collect();
    let dmax = data.iter().map(|c| c.len()).max().unwrap_or(2).max(2);
    let candidates: Vec<CorrelationModel> = match start {
        CorrelationModel::Ar1 { rho } => std::iter::once(rho)
            .chain(grid)
            .map(|rho| CorrelationModel::Ar1 { rho })
            .collect(),
        CorrelationModel::Exchangeable { rho } => {
            let lower = -1.0 / (dmax as f64 - 1.0);
            std::iter::once(rho)
                .chain(grid.into_iter().filter(|r| *r > lower + 0.05))
                .map(|rho| CorrelationModel::Exchangeable { rho })
                .collect()
        }
        other => return other,
    };
    let mut best = (f64::NEG_INFINITY, candidates[0].clone());
    for c in candidates {
        if let Ok((_, l2)) = pairwise_l2(a, &c, data, link, max_lag) {
            if l2.is_finite() && l2 > best.0 {
                best = (l2, c);
            }
        }
    }
    best.1
}

/// Moments of one cluster together with its design matrix.
pub(crate) struct ClusterMoments {
    pub moments: MomentMatrices,
    pub design: DMatrix<f64>,
}

fn moment_level(data: &[ClusterData], opts: &FitOptions) -> MomentLevel {
    let dmax = data.iter().map(|c| c.len()).max().unwrap_or(0);
    if dmax <= opts.stage2_cap {
        MomentLevel::Full
    } else {
        MomentLevel::Univariate
    }
}

const PD_FLOOR: f64 = 1e-3;

pub(crate) fn all_moments(
    a: &ParameterVector,
    corr: &CorrelationModel,
    data: &[ClusterData],
    link: LinkFunction,
    level: MomentLevel,
    opts: &FitOptions,
) -> Result<Vec<ClusterMoments>> {
    // a pairwise unstructured estimate can leave the positive definite cone;
    // the moment matrices then use the nearest correlation matrix
    let repaired = corr.positive_definite_repair(PD_FLOOR);
    let corr = repaired.as_ref().unwrap_or(corr);
    data.par_iter()
        .map(|c| {
            let e = ClusterEval::new(a, c, link)?;
            let moments = cluster_moments(&e, corr, &c.pairs(opts.max_lag), level, HigherOrderRoute::Auto)?;
            Ok(ClusterMoments {
                moments,
                design: e.design(),
            })
        })
        .collect()
}

pub(crate) fn optimal_from_moments(
    data: &[ClusterData],
    moments: &[ClusterMoments],
    stage2: bool,
) -> Result<WeightSet> {
    let w = data
        .par_iter()
        .zip(moments.par_iter())
        .map(|(c, m)| ClusterWeights::optimal(&m.moments, &c.id, stage2))
        .collect::<Result<Vec<_>>>()?;
    Ok(WeightSet::Clusters(w))
}

/// Optimal weight actions at `(a, corr)`. Pair weights are optimal only
/// when `stage2_enabled` and every cluster fits under the stage-2 cap.
pub fn compute_optimal_weights(
    a: &ParameterVector,
    corr: &CorrelationModel,
    data: &[ClusterData],
    link: LinkFunction,
    stage2_enabled: bool,
    opts: &FitOptions,
) -> Result<WeightSet> {
    let level = if stage2_enabled {
        moment_level(data, opts)
    } else {
        MomentLevel::Univariate
    };
    let m = all_moments(a, corr, data, link, level, opts)?;
    optimal_from_moments(data, &m, stage2_enabled && level == MomentLevel::Full)
}

/// Sandwich covariance over `(a, theta)`, or over `a` alone when the pair
/// moments were not computed.
#[derive(Debug, Clone)]
pub struct Sandwich {
    pub covariance: DMatrix<f64>,
    /// Whether the correlation parameters are included.
    pub full: bool,
    pub pieces: GodambePieces,
}

fn null_directions(h: &DMatrix<f64>, names: &[String]) -> String {
    let svd = h.clone().svd(false, true);
    let smax = svd.singular_values.max();
    let vt = svd.v_t.expect("requested");
    let mut out = Vec::new();
    for (i, s) in svd.singular_values.iter().enumerate() {
        if *s <= 1e-10 * smax.max(f64::MIN_POSITIVE) {
            let row = vt.row(i);
            let involved: Vec<&str> = row
                .iter()
                .enumerate()
                .filter(|(_, v)| v.abs() > 0.2)
                .map(|(j, _)| names.get(j).map_or("?", |s| s.as_str()))
                .collect();
            out.push(format!("[{}]", involved.join(", ")));
        }
    }
    if out.is_empty() {
        "numerically singular".into()
    } else {
        out.join("; ")
    }
}

pub(crate) fn sandwich_from(
    moments: &[ClusterMoments],
    weights: &WeightSet,
    r: usize,
    nt: usize,
    names: &[String],
) -> Result<Sandwich> {
    let mut pieces = GodambePieces::zeros(r, nt);
    for (i, cm) in moments.iter().enumerate() {
        match weights {
            WeightSet::Identity => pieces.add(&ClusterWeights::identity(&cm.design, &cm.moments), &cm.moments),
            WeightSet::Clusters(w) => pieces.add(&w[i], &cm.moments),
        }
    }
    let n = if pieces.full { r + nt } else { r };
    let h = pieces.h.view((0, 0), (n, n)).into_owned();
    let j = pieces.j.view((0, 0), (n, n)).into_owned();
    let hinv = h
        .clone()
        .try_inverse()
        .filter(|m| m.iter().all(|v| v.is_finite()))
        .ok_or_else(|| WclError::RankDeficient(null_directions(&h, names)))?;
    let v = &hinv * j * hinv.transpose();
    let covariance = (&v + v.transpose()) * 0.5;
    Ok(Sandwich {
        covariance,
        full: pieces.full,
        pieces,
    })
}

/// Sandwich covariance `H^-1 J H^-T` of the estimator defined by `weights`,
/// with model-based `J` and `H` at `(a, corr)`.
pub fn sandwich_covariance(
    a: &ParameterVector,
    corr: &CorrelationModel,
    data: &[ClusterData],
    link: LinkFunction,
    weights: &WeightSet,
    opts: &FitOptions,
) -> Result<Sandwich> {
    let m = all_moments(a, corr, data, link, moment_level(data, opts), opts)?;
    let names = default_names(a.p(), a.q(), corr);
    sandwich_from(&m, weights, a.r(), corr.n_params(), &names)
}

fn pairwise_l2(
    a: &ParameterVector,
    corr: &CorrelationModel,
    data: &[ClusterData],
    link: LinkFunction,
    max_lag: Option<usize>,
) -> Result<(f64, f64)> {
    let parts = data
        .par_iter()
        .map(|c| {
            let e = ClusterEval::new(a, c, link)?;
            let l2 = pair_scores(&e, corr, &c.pairs(max_lag))?.l2;
            Ok((e.l1(), l2))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    Ok(parts.iter().fold((0.0, 0.0), |s, v| (s.0 + v.0, s.1 + v.1)))
}

fn build_report(
    method: Method,
    link: LinkFunction,
    a: &ParameterVector,
    corr: &CorrelationModel,
    data: &[ClusterData],
    sandwich: &Sandwich,
    mut diagnostics: FitDiagnostics,
) -> Result<FitReport> {
    let names = default_names(a.p(), a.q(), corr);
    let n = sandwich.covariance.nrows();
    let mut se: Vec<Option<f64>> = vec![None; names.len()];
    for i in 0..n {
        let v = sandwich.covariance[(i, i)];
        if v > 0.0 && v.is_finite() {
            se[i] = Some(v.sqrt());
            if v > 1e6 {
                diagnostics.warnings.push(format!(
                    "standard error of {} exceeds 1000: separated categories or an unidentified parameter",
                    names[i]
                ));
            }
        } else {
            diagnostics
                .warnings
                .push(format!("non-positive sandwich variance for {}", names[i]));
        }
    }
    diagnostics.theta_se_available = sandwich.full;
    for th in corr.theta() {
        if th.abs() > 0.999 {
            diagnostics
                .warnings
                .push(format!("correlation estimate {th} is close to the boundary"));
        }
    }
    if corr.positive_definite_repair(PD_FLOOR).is_some() {
        diagnostics.warnings.push(
            "estimated correlation matrix is not positive definite; weights and standard errors use the nearest correlation matrix"
                .into(),
        );
    }
    let (l1, l2) = pairwise_l2(a, corr, data, link, diagnostics.max_lag)?;
    let covariance = (0..n)
        .map(|i| (0..n).map(|j| sandwich.covariance[(i, j)]).collect())
        .collect();
    Ok(FitReport {
        method,
        link,
        estimates: a.clone(),
        correlation: corr.clone(),
        names,
        se,
        covariance,
        n_clusters: data.len(),
        n_observations: data.iter().map(|c| c.len()).sum(),
        l1,
        l2,
        loglik: None,
        diagnostics,
    })
}

/// Both fits of the pipeline.
#[derive(Debug, Clone)]
pub struct WclFit {
    pub cl: FitReport,
    pub wcl: FitReport,
}

fn record(d: &mut FitDiagnostics, s1: SolveInfo, s2: SolveInfo) {
    d.stage1_iterations += s1.iterations;
    d.stage2_iterations += s2.iterations;
    d.stage1_score_norm = s1.score_norm;
    d.stage2_score_norm = s2.score_norm;
}

struct ClStage {
    a: ParameterVector,
    corr: CorrelationModel,
    moments: Vec<ClusterMoments>,
    level: MomentLevel,
    report: FitReport,
}

fn run_cl(data: &[ClusterData], link: LinkFunction, kind: CorrelationKind, opts: &FitOptions) -> Result<ClStage> {
    opts.validate()?;
    let init = initial_parameters(data, link).map_err(|e| e.at_stage("initial values"))?;
    let (a, s1) = solve_stage1(data, link, &WeightSet::Identity, &init, opts).map_err(|e| e.at_stage("cl stage 1"))?;
    let corr0 = initial_correlation(&a, kind, data, link, opts.max_lag).map_err(|e| e.at_stage("initial values"))?;
    let corr0 = refine_single_parameter(&a, corr0, data, link, opts.max_lag);
    let (corr, s2) =
        solve_stage2(&a, &corr0, data, link, &WeightSet::Identity, opts).map_err(|e| e.at_stage("cl stage 2"))?;
    let level = moment_level(data, opts);
    let moments = all_moments(&a, &corr, data, link, level, opts).map_err(|e| e.at_stage("cl moments"))?;
    let names = default_names(a.p(), a.q(), &corr);
    let sw = sandwich_from(&moments, &WeightSet::Identity, a.r(), corr.n_params(), &names)
        .map_err(|e| e.at_stage("cl sandwich"))?;
    let mut diag = FitDiagnostics::new(opts.max_lag);
    record(&mut diag, s1, s2);
    let report = build_report(Method::Cl, link, &a, &corr, data, &sw, diag)?;
    Ok(ClStage {
        a,
        corr,
        moments,
        level,
        report,
    })
}

/// Plain composite likelihood fit with sandwich standard errors.
pub fn fit_cl(data: &[ClusterData], link: LinkFunction, kind: CorrelationKind, opts: &FitOptions) -> Result<FitReport> {
    Ok(run_cl(data, link, kind, opts)?.report)
}

/// Weighted fit; see [`fit_wcl_with_cl`].
pub fn fit_wcl(
    data: &[ClusterData],
    link: LinkFunction,
    kind: CorrelationKind,
    opts: &FitOptions,
) -> Result<FitReport> {
    Ok(fit_wcl_with_cl(data, link, kind, opts)?.wcl)
}

/// Unweighted fit, then up to `weight_updates` rounds of optimal weights at
/// the current estimates followed by weighted refits of both stages.
pub fn fit_wcl_with_cl(
    data: &[ClusterData],
    link: LinkFunction,
    kind: CorrelationKind,
    opts: &FitOptions,
) -> Result<WclFit> {
    let cl = run_cl(data, link, kind, opts)?;
    let stage2 = cl.level == MomentLevel::Full;
    let mut diag = FitDiagnostics::new(opts.max_lag);
    diag.stage2_fallback = !stage2;
    diag.stage2_weighted = stage2;
    let (mut a, mut corr, mut moments) = (cl.a.clone(), cl.corr.clone(), cl.moments);
    let mut weights = WeightSet::Identity;
    for u in 0..opts.weight_updates {
        weights = optimal_from_moments(data, &moments, stage2).map_err(|e| e.at_stage("weights"))?;
        let (a_new, s1) = solve_stage1(data, link, &weights, &a, opts).map_err(|e| e.at_stage("wcl stage 1"))?;
        let (corr_new, s2) =
            solve_stage2(&a_new, &corr, data, link, &weights, opts).map_err(|e| e.at_stage("wcl stage 2"))?;
        record(&mut diag, s1, s2);
        let change = a
            .to_vec()
            .iter()
            .chain(corr.theta().iter())
            .zip(a_new.to_vec().iter().chain(corr_new.theta().iter()))
            .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
        a = a_new;
        corr = corr_new;
        diag.weight_updates = u + 1;
        moments = all_moments(&a, &corr, data, link, cl.level, opts).map_err(|e| e.at_stage("wcl moments"))?;
        if change <= opts.update_tolerance {
            break;
        }
    }
    diag.jitter_clusters = weights.jitter_clusters();
    if diag.stage2_fallback {
        diag.warnings.push(format!(
            "cluster size exceeds the stage-2 cap ({}): pairwise equation unweighted, no correlation standard errors",
            opts.stage2_cap
        ));
    }
    let names = default_names(a.p(), a.q(), &corr);
    let sw =
        sandwich_from(&moments, &weights, a.r(), corr.n_params(), &names).map_err(|e| e.at_stage("wcl sandwich"))?;
    let wcl = build_report(Method::Wcl, link, &a, &corr, data, &sw, diag)?;
    Ok(WclFit { cl: cl.report, wcl })
}
