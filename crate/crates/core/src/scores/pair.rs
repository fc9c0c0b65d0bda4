//! Bivariate pieces: pair probabilities, correlation scores and their
//! derivatives with respect to the shifted cutpoints.

use crate::error::{Result, WclError};
use crate::kernels::bvn::{bvn_cdf_dh, bvn_pdf, BvnFixed};
use crate::kernels::normal::pdf;
use crate::margins::ordinal::MIN_PROBABILITY;
use crate::margins::{LinkFunction, MarginEval, ShiftedCutpoints};

/// Joint pmf and correlation score of one coordinate pair over all `K_j x K_k`
/// category cells (row-major, first coordinate slowest).
#[derive(Debug, Clone)]
pub struct PairTable {
    pub kj: usize,
    pub kk: usize,
    pub rho: f64,
    pub prob: Vec<f64>,
    /// `d log f2 / d rho` per cell; zero on cells of zero probability.
    pub score: Vec<f64>,
}

impl PairTable {
    pub fn new(mj: &MarginEval, mk: &MarginEval, rho: f64) -> Self {
        let (kj, kk) = (mj.pmf.len(), mk.pmf.len());
        let bvn = BvnFixed::new(rho);
        let (ej, ek) = (kj + 1, kk + 1);
        // extended grids of the distribution function and the density
        let mut cdf = vec![0.0; ej * ek];
        let mut dens = vec![0.0; ej * ek];
        for a in 1..ej {
            for b in 1..ek {
                let (h, k) = (mj.z[a], mk.z[b]);
                cdf[a * ek + b] = if a == ej - 1 && b == ek - 1 {
                    1.0
                } else if a == ej - 1 {
                    mk.cum(b)
                } else if b == ek - 1 {
                    mj.cum(a)
                } else {
                    bvn.cdf(h, k)
                };
                dens[a * ek + b] = bvn_pdf(h, k, rho);
            }
        }
        let mut prob = vec![0.0; kj * kk];
        let mut score = vec![0.0; kj * kk];
        for a in 0..kj {
            for b in 0..kk {
                let corner =
                    |g: &[f64]| g[(a + 1) * ek + b + 1] - g[a * ek + b + 1] - g[(a + 1) * ek + b] + g[a * ek + b];
                let f = corner(&cdf).max(0.0);
                prob[a * kk + b] = f;
                if f >= MIN_PROBABILITY {
                    score[a * kk + b] = corner(&dens) / f;
                }
            }
        }
        PairTable {
            kj,
            kk,
            rho,
            prob,
            score,
        }
    }

    #[inline]
    pub fn cell(&self, cj: usize, ck: usize) -> usize {
        cj * self.kk + ck
    }

    /// Expected squared score, the per-pair information for `rho`.
    pub fn information(&self) -> f64 {
        self.prob.iter().zip(&self.score).map(|(f, s)| f * s * s).sum()
    }

    /// `sum_cells s * d f2 / d g` for the shifted cutpoints of each member
    /// of the pair: returns (length `q_j`, length `q_k`). Minus these are
    /// the expected derivatives of the score.
    pub fn score_cutpoint_products(&self, mj: &MarginEval, mk: &MarginEval) -> (Vec<f64>, Vec<f64>) {
        let rho = self.rho;
        let gj = side_products(self, mj, mk, rho, false);
        let gk = side_products(self, mk, mj, rho, true);
        (gj, gk)
    }
}

/// For the margin `m` (the row side unless `transposed`), the sums
/// `slope_u * sum_c D(u, c_other) (s(u-1, c_other) - s(u, c_other))`.
fn side_products(t: &PairTable, m: &MarginEval, other: &MarginEval, rho: f64, transposed: bool) -> Vec<f64> {
    let q = m.q();
    let ko = other.pmf.len();
    let s = |c_self: usize, c_other: usize| {
        if transposed {
            t.score[t.cell(c_other, c_self)]
        } else {
            t.score[t.cell(c_self, c_other)]
        }
    };
    let mut out = vec![0.0; q];
    for (u, o) in out.iter_mut().enumerate() {
        let h = m.z[u + 1];
        let mut acc = 0.0;
        let mut prev = 0.0; // d/dh Phi2(h, -inf)
        for c in 0..ko {
            let upper = other.z[c + 1];
            let cur = if upper == f64::INFINITY {
                pdf(h)
            } else {
                bvn_cdf_dh(h, upper, rho)
            };
            acc += (cur - prev) * (s(u, c) - s(u + 1, c));
            prev = cur;
        }
        *o = m.slope[u] * acc;
    }
    out
}

impl MarginEval {
    /// `P(Y <= c)` for the extended threshold index `c` (0 gives 0).
    #[inline]
    pub fn cum(&self, c: usize) -> f64 {
        self.pmf[..c].iter().sum()
    }
}

fn pair_setup(
    yj: usize,
    yk: usize,
    sc_j: &ShiftedCutpoints,
    sc_k: &ShiftedCutpoints,
    rho: f64,
    link: LinkFunction,
) -> Result<PairTable> {
    if !(rho.abs() < 1.0) {
        return Err(WclError::Domain(format!("pair correlation {rho} outside (-1, 1)")));
    }
    let mj = MarginEval::new(&sc_j.0, link)?;
    let mk = MarginEval::new(&sc_k.0, link)?;
    if yj == 0 || yj > mj.pmf.len() || yk == 0 || yk > mk.pmf.len() {
        return Err(WclError::Domain(format!("categories ({yj}, {yk}) out of range")));
    }
    Ok(PairTable::new(&mj, &mk, rho))
}

/// Joint probability of categories `(y_j, y_k)` (1-based) for one pair.
pub fn pair_pmf(
    yj: usize,
    yk: usize,
    sc_j: &ShiftedCutpoints,
    sc_k: &ShiftedCutpoints,
    rho: f64,
    link: LinkFunction,
) -> Result<f64> {
    let t = pair_setup(yj, yk, sc_j, sc_k, rho, link)?;
    Ok(t.prob[t.cell(yj - 1, yk - 1)])
}

/// `d log f2 / d rho` at categories `(y_j, y_k)`.
pub fn pair_rho_score(
    yj: usize,
    yk: usize,
    sc_j: &ShiftedCutpoints,
    sc_k: &ShiftedCutpoints,
    rho: f64,
    link: LinkFunction,
) -> Result<f64> {
    let t = pair_setup(yj, yk, sc_j, sc_k, rho, link)?;
    let c = t.cell(yj - 1, yk - 1);
    if t.prob[c] < MIN_PROBABILITY {
        return Err(WclError::DegenerateProbability {
            value: t.prob[c],
            context: format!("pair cell ({yj}, {yk}) at rho {rho}"),
        });
    }
    Ok(t.score[c])
}
