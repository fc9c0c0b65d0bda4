//! Covariances and expected derivatives of the per-cluster composite scores.
//!
//! Univariate-pair entries come from `K^2` pair tables. Entries coupling
//! three or four coordinates come either from exact `K^3`/`K^4` rectangle
//! tables, or, for non-negative exchangeable correlation, from the
//! one-factor representation in which the coordinates are conditionally
//! independent given the factor.

use nalgebra::DMatrix;

use super::cluster::{pair_jacobian, ClusterEval};
use super::pair::PairTable;
use crate::error::{Result, WclError};
use crate::kernels::exchangeable::{conditional_interval, FactorRule};
use crate::kernels::{rectangle_table, SmallCorr};
use crate::model::CorrelationModel;

/// Which moment blocks to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentLevel {
    /// `omega1` and `psi1` only: needs bivariate probabilities alone.
    Univariate,
    /// Every block, including the `K^3`/`K^4` summations.
    Full,
}

/// How the three- and four-coordinate expectations are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HigherOrderRoute {
    /// Factor integral when the model is exchangeable with `rho >= 0`,
    /// rectangle tables otherwise.
    Auto,
    Tables,
    Factor,
}

/// Per-cluster moment matrices. Pair-indexed blocks follow the order of the
/// pair list they were computed for.
#[derive(Debug, Clone)]
pub struct MomentMatrices {
    /// `Cov(s1)`, `dq x dq`.
    pub omega1: DMatrix<f64>,
    /// `Cov(s1, s2)`, `dq x m2`.
    pub omega12: Option<DMatrix<f64>>,
    /// `Cov(s2)`, `m2 x m2`.
    pub omega2: Option<DMatrix<f64>>,
    /// `E(d s1 / d a)`, `dq x r`.
    pub psi1: DMatrix<f64>,
    /// `E(d s2 / d a)`, `m2 x r`.
    pub psi21: Option<DMatrix<f64>>,
    /// `E(d s2 / d theta)`, `m2 x n_theta`.
    pub delta2: Option<DMatrix<f64>>,
    /// `d rho_p / d theta`, `m2 x n_theta`.
    pub pair_jacobian: DMatrix<f64>,
    pub pairs: Vec<(usize, usize)>,
}

/// Computes the moment matrices of one cluster. `pairs` lists the pair
/// scores entering the bivariate equation (positions within the cluster);
/// `omega1` always uses every pair.
pub fn cluster_moments(
    eval: &ClusterEval,
    corr: &CorrelationModel,
    pairs: &[(usize, usize)],
    level: MomentLevel,
    route: HigherOrderRoute,
) -> Result<MomentMatrices> {
    let d = eval.d();
    let (p, q) = (eval.p, eval.q);
    let r = p + q;
    let coords = &eval.cluster.coords;
    corr.check_coords(coords)?;

    let mut omega1 = DMatrix::zeros(d * q, d * q);
    for (j, m) in eval.margins.iter().enumerate() {
        let h = m.expected_hessian();
        for a in 0..q {
            for b in 0..q {
                omega1[(j * q + a, j * q + b)] = -h[(a, b)];
            }
        }
    }
    let psi1 = eval.psi1();

    // position of each listed pair, for the full level
    let mut pair_pos = vec![usize::MAX; if level == MomentLevel::Full { d * d } else { 0 }];
    if level == MomentLevel::Full {
        for (i, &(j, k)) in pairs.iter().enumerate() {
            pair_pos[j * d + k] = i;
        }
    }
    let mut tables: Vec<Option<PairTable>> = vec![None; if level == MomentLevel::Full { pairs.len() } else { 0 }];

    for j in 0..d {
        for k in (j + 1)..d {
            let t = eval.pair_table(corr, j, k);
            let (mj, mk) = (&eval.margins[j], &eval.margins[k]);
            for cj in 0..t.kj {
                let ej = mj.score_entries(cj);
                for ck in 0..t.kk {
                    let f = t.prob[t.cell(cj, ck)];
                    if f == 0.0 {
                        continue;
                    }
                    for &(a, va) in &ej {
                        if va == 0.0 {
                            continue;
                        }
                        for &(b, vb) in &mk.score_entries(ck) {
                            omega1[(j * q + a, k * q + b)] += f * va * vb;
                        }
                    }
                }
            }
            for a in 0..q {
                for b in 0..q {
                    omega1[(k * q + b, j * q + a)] = omega1[(j * q + a, k * q + b)];
                }
            }
            if level == MomentLevel::Full && pair_pos[j * d + k] != usize::MAX {
                tables[pair_pos[j * d + k]] = Some(t);
            }
        }
    }

    let jac = pair_jacobian(corr, coords, pairs);
    if level == MomentLevel::Univariate {
        return Ok(MomentMatrices {
            omega1,
            omega12: None,
            omega2: None,
            psi1,
            psi21: None,
            delta2: None,
            pair_jacobian: jac,
            pairs: pairs.to_vec(),
        });
    }

    let tables: Vec<PairTable> = tables.into_iter().map(|t| t.expect("pair table")).collect();
    let m2 = pairs.len();
    let mut omega12 = DMatrix::zeros(d * q, m2);
    let mut omega2 = DMatrix::zeros(m2, m2);
    let mut psi21 = DMatrix::zeros(m2, r);
    let mut delta2 = DMatrix::zeros(m2, corr.n_params());

    for (i, (&(j, k), t)) in pairs.iter().zip(&tables).enumerate() {
        let info = t.information();
        omega2[(i, i)] = info;
        for th in 0..corr.n_params() {
            delta2[(i, th)] = -info * jac[(i, th)];
        }
        let (gj, gk) = t.score_cutpoint_products(&eval.margins[j], &eval.margins[k]);
        for m in 0..q {
            psi21[(i, p + m)] = -(gj[m] + gk[m]);
        }
        let (sj, sk): (f64, f64) = (gj.iter().sum(), gk.iter().sum());
        for c in 0..p {
            psi21[(i, c)] = -(sj * eval.cluster.x[j][c] + sk * eval.cluster.x[k][c]);
        }
        // shared-coordinate covariances with the univariate scores
        let (mj, mk) = (&eval.margins[j], &eval.margins[k]);
        for cj in 0..t.kj {
            for ck in 0..t.kk {
                let c = t.cell(cj, ck);
                let w = t.prob[c] * t.score[c];
                if w == 0.0 {
                    continue;
                }
                for (a, v) in mj.score_entries(cj) {
                    omega12[(j * q + a, i)] += w * v;
                }
                for (a, v) in mk.score_entries(ck) {
                    omega12[(k * q + a, i)] += w * v;
                }
            }
        }
    }

    let use_factor = match route {
        HigherOrderRoute::Factor => true,
        HigherOrderRoute::Tables => false,
        HigherOrderRoute::Auto => matches!(corr, CorrelationModel::Exchangeable { rho } if *rho >= 0.0),
    };
    if use_factor {
        let rho = match corr {
            CorrelationModel::Exchangeable { rho } if *rho >= 0.0 => *rho,
            _ => {
                return Err(WclError::Capability(
                    "the factor route needs non-negative exchangeable correlation".into(),
                ))
            }
        };
        factor_moments(eval, rho, pairs, &tables, &pair_pos, &mut omega12, &mut omega2);
    } else {
        table_moments(eval, corr, pairs, &tables, &pair_pos, &mut omega12, &mut omega2)?;
    }

    Ok(MomentMatrices {
        omega1,
        omega12: Some(omega12),
        omega2: Some(omega2),
        psi1,
        psi21: Some(psi21),
        delta2: Some(delta2),
        pair_jacobian: jac,
        pairs: pairs.to_vec(),
    })
}

fn sub_corr(eval: &ClusterEval, corr: &CorrelationModel, idx: &[usize]) -> Result<SmallCorr> {
    let coords = &eval.cluster.coords;
    let c = SmallCorr::from_fn(idx.len(), |a, b| corr.rho(coords[idx[a]], coords[idx[b]]));
    let m = DMatrix::from_fn(idx.len(), idx.len(), |a, b| c.get(a, b));
    if m.cholesky().is_none() {
        return Err(WclError::Conditioning {
            cluster: eval.cluster.id.clone(),
            detail: format!(
                "latent correlation of coordinates {:?} is not positive definite",
                idx.iter().map(|&i| coords[i] + 1).collect::<Vec<_>>()
            ),
        });
    }
    Ok(c)
}

fn table_moments(
    eval: &ClusterEval,
    corr: &CorrelationModel,
    pairs: &[(usize, usize)],
    tables: &[PairTable],
    pair_pos: &[usize],
    omega12: &mut DMatrix<f64>,
    omega2: &mut DMatrix<f64>,
) -> Result<()> {
    let d = eval.d();
    let q = eval.q;
    if pairs.is_empty() {
        return Ok(());
    }
    let pos = |a: usize, b: usize| pair_pos[a * d + b];
    let k = eval.margins[0].pmf.len();
    for u0 in 0..d {
        for u1 in (u0 + 1)..d {
            for u2 in (u1 + 1)..d {
                let u = [u0, u1, u2];
                let pp = [pos(u1, u2), pos(u0, u2), pos(u0, u1)];
                if pp.iter().all(|&v| v == usize::MAX) {
                    continue;
                }
                let c = sub_corr(eval, corr, &u)?;
                let cuts: Vec<&[f64]> = u.iter().map(|&i| eval.margins[i].z.as_slice()).collect();
                let tab = rectangle_table(&cuts, &c);
                let cell3 = |a: usize, b: usize, e: usize| (a * k + b) * k + e;
                // univariate score of the coordinate left out of each pair
                for (l, &pi) in pp.iter().enumerate() {
                    if pi == usize::MAX {
                        continue;
                    }
                    let t = &tables[pi];
                    let m = &eval.margins[u[l]];
                    let mut acc = vec![0.0; q];
                    for c0 in 0..k {
                        for c1 in 0..k {
                            for c2 in 0..k {
                                let f = tab[cell3(c0, c1, c2)];
                                let cc = [c0, c1, c2];
                                let (a, b) = match l {
                                    0 => (cc[1], cc[2]),
                                    1 => (cc[0], cc[2]),
                                    _ => (cc[0], cc[1]),
                                };
                                let w = f * t.score[t.cell(a, b)];
                                for (comp, v) in m.score_entries(cc[l]) {
                                    acc[comp] += w * v;
                                }
                            }
                        }
                    }
                    for comp in 0..q {
                        omega12[(u[l] * q + comp, pi)] = acc[comp];
                    }
                }
                // pairs of pairs sharing one coordinate: (01,02), (01,12), (02,12)
                let (p01, p02, p12) = (pp[2], pp[1], pp[0]);
                for &(pa, pb, sel) in &[(p01, p02, 0usize), (p01, p12, 1), (p02, p12, 2)] {
                    if pa == usize::MAX || pb == usize::MAX {
                        continue;
                    }
                    let (ta, tb) = (&tables[pa], &tables[pb]);
                    let mut acc = 0.0;
                    for c0 in 0..k {
                        for c1 in 0..k {
                            for c2 in 0..k {
                                let (sa, sb) = match sel {
                                    0 => (ta.score[ta.cell(c0, c1)], tb.score[tb.cell(c0, c2)]),
                                    1 => (ta.score[ta.cell(c0, c1)], tb.score[tb.cell(c1, c2)]),
                                    _ => (ta.score[ta.cell(c0, c2)], tb.score[tb.cell(c1, c2)]),
                                };
                                acc += tab[cell3(c0, c1, c2)] * sa * sb;
                            }
                        }
                    }
                    omega2[(pa, pb)] = acc;
                    omega2[(pb, pa)] = acc;
                }
            }
        }
    }
    for u0 in 0..d {
        for u1 in (u0 + 1)..d {
            for u2 in (u1 + 1)..d {
                for u3 in (u2 + 1)..d {
                    let u = [u0, u1, u2, u3];
                    let pairings = [((0, 1), (2, 3)), ((0, 2), (1, 3)), ((0, 3), (1, 2))];
                    let ids: Vec<(usize, usize)> = pairings
                        .iter()
                        .map(|&((a, b), (e, f))| (pos(u[a], u[b]), pos(u[e], u[f])))
                        .collect();
                    if ids.iter().all(|&(a, b)| a == usize::MAX || b == usize::MAX) {
                        continue;
                    }
                    let c = sub_corr(eval, corr, &u)?;
                    let cuts: Vec<&[f64]> = u.iter().map(|&i| eval.margins[i].z.as_slice()).collect();
                    let tab = rectangle_table(&cuts, &c);
                    for (&((a, b), (e, f)), &(pa, pb)) in pairings.iter().zip(&ids) {
                        if pa == usize::MAX || pb == usize::MAX {
                            continue;
                        }
                        let (ta, tb) = (&tables[pa], &tables[pb]);
                        let mut acc = 0.0;
                        let mut cc = [0usize; 4];
                        for (flat, &pr) in tab.iter().enumerate() {
                            if pr == 0.0 {
                                continue;
                            }
                            let mut rem = flat;
                            for slot in (0..4).rev() {
                                cc[slot] = rem % k;
                                rem /= k;
                            }
                            acc += pr * ta.score[ta.cell(cc[a], cc[b])] * tb.score[tb.cell(cc[e], cc[f])];
                        }
                        omega2[(pa, pb)] = acc;
                        omega2[(pb, pa)] = acc;
                    }
                }
            }
        }
    }
    Ok(())
}

fn factor_moments(
    eval: &ClusterEval,
    rho: f64,
    pairs: &[(usize, usize)],
    tables: &[PairTable],
    pair_pos: &[usize],
    omega12: &mut DMatrix<f64>,
    omega2: &mut DMatrix<f64>,
) {
    let d = eval.d();
    let q = eval.q;
    let k = eval.margins[0].pmf.len();
    let rule = FactorRule::standard();
    let (sr, sc) = (rho.sqrt(), (1.0 - rho).sqrt());
    // keep nodes carrying mass
    let nodes: Vec<(f64, f64)> = rule
        .nodes
        .iter()
        .zip(&rule.weights)
        .filter(|(_, w)| **w > 1e-300)
        .map(|(x, w)| (*x, *w))
        .collect();
    let nn = nodes.len();
    // conditional category probabilities pi[j][n * k + c]
    let pi: Vec<Vec<f64>> = eval
        .margins
        .iter()
        .map(|m| {
            let mut v = vec![0.0; nn * k];
            for (n, &(w, _)) in nodes.iter().enumerate() {
                for c in 0..k {
                    v[n * k + c] = conditional_interval(m.z[c], m.z[c + 1], sr, sc, w);
                }
            }
            v
        })
        .collect();
    // conditional means of each pair score given one member's category
    // and the factor; bj[i][n * k + cj], bk[i][n * k + ck], and a[i][n]
    let m2 = pairs.len();
    let mut bj = vec![vec![0.0; nn * k]; m2];
    let mut bk = vec![vec![0.0; nn * k]; m2];
    let mut amean = vec![vec![0.0; nn]; m2];
    for (i, (&(j, kk), t)) in pairs.iter().zip(tables).enumerate() {
        for n in 0..nn {
            let (pj, pk) = (&pi[j][n * k..(n + 1) * k], &pi[kk][n * k..(n + 1) * k]);
            let mut tot = 0.0;
            for cj in 0..k {
                let mut v = 0.0;
                for ck in 0..k {
                    let s = t.score[t.cell(cj, ck)];
                    v += pk[ck] * s;
                    bk[i][n * k + ck] += pj[cj] * s;
                }
                bj[i][n * k + cj] = v;
                tot += pj[cj] * v;
            }
            amean[i][n] = tot;
        }
    }
    // conditional means of the univariate scores
    let umean: Vec<Vec<f64>> = eval
        .margins
        .iter()
        .enumerate()
        .map(|(l, m)| {
            let mut v = vec![0.0; nn * q];
            for n in 0..nn {
                for c in 0..k {
                    let w = pi[l][n * k + c];
                    for (comp, s) in m.score_entries(c) {
                        v[n * q + comp] += w * s;
                    }
                }
            }
            v
        })
        .collect();

    for (i, &(j, kk)) in pairs.iter().enumerate() {
        for l in 0..d {
            if l == j || l == kk {
                continue;
            }
            for comp in 0..q {
                let mut acc = 0.0;
                for (n, &(_, w)) in nodes.iter().enumerate() {
                    acc += w * umean[l][n * q + comp] * amean[i][n];
                }
                omega12[(l * q + comp, i)] = acc;
            }
        }
    }
    let _ = pair_pos;
    for a in 0..m2 {
        let (ja, ka) = pairs[a];
        for b in (a + 1)..m2 {
            let (jb, kb) = pairs[b];
            let shared = if ja == jb || ja == kb {
                Some(ja)
            } else if ka == jb || ka == kb {
                Some(ka)
            } else {
                None
            };
            let acc = match shared {
                None => nodes
                    .iter()
                    .enumerate()
                    .map(|(n, &(_, w))| w * amean[a][n] * amean[b][n])
                    .sum(),
                Some(s) => {
                    let ba = if s == ja { &bj[a] } else { &bk[a] };
                    let bb = if s == jb { &bj[b] } else { &bk[b] };
                    let mut acc = 0.0;
                    for (n, &(_, w)) in nodes.iter().enumerate() {
                        let mut v = 0.0;
                        for c in 0..k {
                            v += pi[s][n * k + c] * ba[n * k + c] * bb[n * k + c];
                        }
                        acc += w * v;
                    }
                    acc
                }
            };
            omega2[(a, b)] = acc;
            omega2[(b, a)] = acc;
        }
    }
}
