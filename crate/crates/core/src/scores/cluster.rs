//! Per-cluster evaluation of margins and observed composite scores.

use nalgebra::{DMatrix, DVector};

use super::pair::PairTable;
use crate::error::{Result, WclError};
use crate::margins::ordinal::MIN_PROBABILITY;
use crate::margins::{LinkFunction, MarginEval, ParameterVector};
use crate::model::{ClusterData, CorrelationModel};

/// Margins of every observation in a cluster at fixed univariate parameters.
#[derive(Debug, Clone)]
pub struct ClusterEval<'a> {
    pub cluster: &'a ClusterData,
    pub margins: Vec<MarginEval>,
    pub link: LinkFunction,
    pub p: usize,
    pub q: usize,
}

impl<'a> ClusterEval<'a> {
    pub fn new(a: &ParameterVector, cluster: &'a ClusterData, link: LinkFunction) -> Result<Self> {
        let margins = cluster
            .x
            .iter()
            .map(|x| {
                let nu = a.predictor(x);
                let g: Vec<f64> = a.gamma.iter().map(|v| v + nu).collect();
                MarginEval::new(&g, link)
            })
            .collect::<Result<Vec<_>>>()
            .map_err(|e| match e {
                WclError::DegenerateProbability { value, context } => WclError::DegenerateProbability {
                    value,
                    context: format!("cluster '{}': {context}", cluster.id),
                },
                other => other,
            })?;
        Ok(ClusterEval {
            cluster,
            margins,
            link,
            p: a.p(),
            q: a.q(),
        })
    }

    pub fn d(&self) -> usize {
        self.margins.len()
    }

    pub fn r(&self) -> usize {
        self.p + self.q
    }

    /// Category (0-based) observed at position `j`.
    #[inline]
    pub fn obs(&self, j: usize) -> usize {
        self.cluster.y[j] - 1
    }

    /// Stacked univariate scores `s^(1)` (length `d q`).
    pub fn s1(&self) -> DVector<f64> {
        let q = self.q;
        let mut s = DVector::zeros(self.d() * q);
        for (j, m) in self.margins.iter().enumerate() {
            for (c, v) in m.score_entries(self.obs(j)) {
                s[j * q + c] += v;
            }
        }
        s
    }

    /// `X_i^T s^(1)`: the contribution to the unweighted univariate score.
    pub fn xt_times(&self, v: &DVector<f64>) -> DVector<f64> {
        let (p, q) = (self.p, self.q);
        let mut out = DVector::zeros(p + q);
        for j in 0..self.d() {
            let block = v.rows(j * q, q);
            let tot: f64 = block.sum();
            for (b, x) in self.cluster.x[j].iter().enumerate() {
                out[b] += x * tot;
            }
            for m in 0..q {
                out[p + m] += block[m];
            }
        }
        out
    }

    /// `X_i` as a dense `d q x r` matrix (the transpose of the design block).
    pub fn design(&self) -> DMatrix<f64> {
        let (p, q) = (self.p, self.q);
        let mut x = DMatrix::zeros(self.d() * q, p + q);
        for j in 0..self.d() {
            for m in 0..q {
                for (b, v) in self.cluster.x[j].iter().enumerate() {
                    x[(j * q + m, b)] = *v;
                }
                x[(j * q + m, p + m)] = 1.0;
            }
        }
        x
    }

    /// `E(d s1 / d a)`: each margin's expected Hessian mapped through its
    /// design rows, `d q x r`.
    pub fn psi1(&self) -> DMatrix<f64> {
        let (p, q) = (self.p, self.q);
        let mut psi = DMatrix::zeros(self.d() * q, p + q);
        for (j, m) in self.margins.iter().enumerate() {
            let h = m.expected_hessian();
            for a in 0..q {
                let row: f64 = h.row(a).sum();
                for (c, x) in self.cluster.x[j].iter().enumerate() {
                    psi[(j * q + a, c)] = row * x;
                }
                for b in 0..q {
                    psi[(j * q + a, p + b)] = h[(a, b)];
                }
            }
        }
        psi
    }

    /// `X_i^T psi1_i` without forming either matrix, `r x r`.
    pub fn xt_psi1(&self) -> DMatrix<f64> {
        let (p, q) = (self.p, self.q);
        let mut out = DMatrix::zeros(p + q, p + q);
        for (j, m) in self.margins.iter().enumerate() {
            let h = m.expected_hessian();
            let x = &self.cluster.x[j];
            let col: Vec<f64> = (0..q).map(|b| h.column(b).sum()).collect();
            let tot: f64 = col.iter().sum();
            for u in 0..p {
                for v in 0..p {
                    out[(u, v)] += x[u] * x[v] * tot;
                }
                for b in 0..q {
                    out[(u, p + b)] += x[u] * col[b];
                    out[(p + b, u)] += x[u] * col[b];
                }
            }
            for a in 0..q {
                for b in 0..q {
                    out[(p + a, p + b)] += h[(a, b)];
                }
            }
        }
        out
    }

    /// Univariate log-likelihood of the cluster.
    pub fn l1(&self) -> f64 {
        self.margins
            .iter()
            .enumerate()
            .map(|(j, m)| m.pmf[self.obs(j)].ln())
            .sum()
    }

    /// Pair table for positions `(j, k)`.
    pub fn pair_table(&self, corr: &CorrelationModel, j: usize, k: usize) -> PairTable {
        let rho = corr.rho(self.cluster.coords[j], self.cluster.coords[k]);
        PairTable::new(&self.margins[j], &self.margins[k], rho)
    }
}

/// Observed bivariate pieces of one cluster for a list of pairs.
#[derive(Debug, Clone)]
pub struct PairScores {
    /// `d log f2 / d rho` at the observed cells.
    pub score: Vec<f64>,
    /// Expected squared score per pair.
    pub information: Vec<f64>,
    /// Sum of observed log pair probabilities.
    pub l2: f64,
}

/// Observed pair scores, per-pair information and the pairwise
/// log-likelihood, checking the correlation boundary.
pub fn pair_scores(eval: &ClusterEval, corr: &CorrelationModel, pairs: &[(usize, usize)]) -> Result<PairScores> {
    let coords = &eval.cluster.coords;
    let mut score = Vec::with_capacity(pairs.len());
    let mut information = Vec::with_capacity(pairs.len());
    let mut l2 = 0.0;
    for &(j, k) in pairs {
        let rho = corr.rho(coords[j], coords[k]);
        if !(rho.abs() <= 1.0 - 1e-6) {
            return Err(WclError::Boundary(format!(
                "cluster '{}': correlation {rho} of coordinates ({}, {}) at the boundary",
                eval.cluster.id,
                coords[j] + 1,
                coords[k] + 1
            )));
        }
        let t = PairTable::new(&eval.margins[j], &eval.margins[k], rho);
        let c = t.cell(eval.obs(j), eval.obs(k));
        let f = t.prob[c];
        if f < MIN_PROBABILITY {
            return Err(WclError::DegenerateProbability {
                value: f,
                context: format!(
                    "cluster '{}', pair ({}, {})",
                    eval.cluster.id,
                    coords[j] + 1,
                    coords[k] + 1
                ),
            });
        }
        l2 += f.ln();
        score.push(t.score[c]);
        information.push(t.information());
    }
    Ok(PairScores { score, information, l2 })
}

/// `d rho_p / d theta` as an `m2 x n_theta` matrix.
pub fn pair_jacobian(corr: &CorrelationModel, coords: &[usize], pairs: &[(usize, usize)]) -> DMatrix<f64> {
    let mut c = DMatrix::zeros(pairs.len(), corr.n_params());
    for (row, &(j, k)) in pairs.iter().enumerate() {
        let (idx, d) = corr.drho(coords[j], coords[k]);
        c[(row, idx)] = d;
    }
    c
}
