//! Cumulative ordinal regression for one observation:
//! `P(Y <= y) = F(alpha_y + x'beta)`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::LinkFunction;
use crate::error::{Result, WclError};

/// Smallest category probability accepted before a score is declared degenerate.
pub const MIN_PROBABILITY: f64 = 1e-300;

/// Univariate parameters: regression slopes and ordered cutpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl ParameterVector {
    pub fn new(beta: Vec<f64>, gamma: Vec<f64>) -> Result<Self> {
        let a = ParameterVector { beta, gamma };
        a.validate()?;
        Ok(a)
    }

    pub fn validate(&self) -> Result<()> {
        if self.gamma.is_empty() {
            return Err(WclError::Domain(
                "at least one cutpoint (two categories) is required".into(),
            ));
        }
        if self.beta.iter().chain(&self.gamma).any(|v| !v.is_finite()) {
            return Err(WclError::Domain("parameters must be finite".into()));
        }
        if self.gamma.windows(2).any(|w| w[0] >= w[1]) {
            return Err(WclError::Domain(format!(
                "cutpoints must increase strictly: {:?}",
                self.gamma
            )));
        }
        Ok(())
    }

    /// Number of categories.
    pub fn categories(&self) -> usize {
        self.gamma.len() + 1
    }

    pub fn p(&self) -> usize {
        self.beta.len()
    }

    pub fn q(&self) -> usize {
        self.gamma.len()
    }

    /// Total length `p + q`.
    pub fn r(&self) -> usize {
        self.beta.len() + self.gamma.len()
    }

    /// `(beta, gamma)` stacked.
    pub fn to_vec(&self) -> Vec<f64> {
        self.beta.iter().chain(&self.gamma).copied().collect()
    }

    pub fn from_slice(v: &[f64], p: usize) -> Self {
        ParameterVector {
            beta: v[..p].to_vec(),
            gamma: v[p..].to_vec(),
        }
    }

    /// Linear predictor `x'beta`.
    pub fn predictor(&self, x: &[f64]) -> f64 {
        self.beta.iter().zip(x).map(|(b, x)| b * x).sum()
    }

    pub fn shifted(&self, x: &[f64]) -> ShiftedCutpoints {
        ShiftedCutpoints::new(&self.gamma, self.predictor(x))
    }
}

/// Cutpoints of one observation shifted by its linear predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftedCutpoints(pub Vec<f64>);

impl ShiftedCutpoints {
    pub fn new(gamma: &[f64], nu: f64) -> Self {
        ShiftedCutpoints(gamma.iter().map(|g| g + nu).collect())
    }

    pub fn q(&self) -> usize {
        self.0.len()
    }

    pub fn categories(&self) -> usize {
        self.0.len() + 1
    }
}

fn check_category(y: usize, k: usize) -> Result<()> {
    if y == 0 || y > k {
        return Err(WclError::Domain(format!("category {y} outside 1..={k}")));
    }
    Ok(())
}

/// Probability of category `y` (1-based) given the shifted cutpoints.
pub fn ordinal_pmf(y: usize, sc: &ShiftedCutpoints, link: LinkFunction) -> Result<f64> {
    check_category(y, sc.categories())?;
    Ok(category_probability(y - 1, &sc.0, link))
}

/// Probability of the 0-based category `c`, differencing in whichever tail
/// keeps precision.
#[inline]
pub(crate) fn category_probability(c: usize, g: &[f64], link: LinkFunction) -> f64 {
    let lo = if c == 0 { f64::NEG_INFINITY } else { g[c - 1] };
    let hi = if c == g.len() { f64::INFINITY } else { g[c] };
    if lo > 0.0 {
        link.sf(lo) - link.sf(hi)
    } else {
        link.cdf(hi) - link.cdf(lo)
    }
}

/// Gradient of `log f(y)` with respect to the shifted cutpoints.
pub fn ordinal_score(y: usize, sc: &ShiftedCutpoints, link: LinkFunction) -> Result<Vec<f64>> {
    check_category(y, sc.categories())?;
    let c = y - 1;
    let f = category_probability(c, &sc.0, link);
    if !(f >= MIN_PROBABILITY) {
        return Err(WclError::DegenerateProbability {
            value: f,
            context: format!("category {y} at cutpoints {:?}", sc.0),
        });
    }
    let mut s = vec![0.0; sc.q()];
    if c < sc.q() {
        s[c] = link.pdf(sc.0[c]) / f;
    }
    if c > 0 {
        s[c - 1] = -link.pdf(sc.0[c - 1]) / f;
    }
    Ok(s)
}

/// Expected derivative of the score in the shifted cutpoints: minus the
/// score covariance, tridiagonal.
pub fn ordinal_expected_hessian(sc: &ShiftedCutpoints, link: LinkFunction) -> Result<DMatrix<f64>> {
    let m = MarginEval::new(&sc.0, link)?;
    Ok(m.expected_hessian())
}

/// Everything the composite scores need about one observation's margin.
#[derive(Debug, Clone)]
pub struct MarginEval {
    /// Shifted cutpoints `g_m`.
    pub g: Vec<f64>,
    /// `F'(g_m)`.
    pub dens: Vec<f64>,
    /// Category probabilities, 0-based.
    pub pmf: Vec<f64>,
    /// Latent thresholds, length `K + 1` from `-inf` to `+inf`.
    pub z: Vec<f64>,
    /// `dz_m / dg_m` for the interior thresholds.
    pub slope: Vec<f64>,
}

impl MarginEval {
    pub fn new(g: &[f64], link: LinkFunction) -> Result<Self> {
        let q = g.len();
        let pmf: Vec<f64> = (0..=q).map(|c| category_probability(c, g, link)).collect();
        if let Some((c, &f)) = pmf.iter().enumerate().find(|(_, &f)| !(f >= MIN_PROBABILITY)) {
            return Err(WclError::DegenerateProbability {
                value: f,
                context: format!("category {} at cutpoints {:?}", c + 1, g),
            });
        }
        let mut z = Vec::with_capacity(q + 2);
        z.push(f64::NEG_INFINITY);
        let mut slope = Vec::with_capacity(q);
        for &gm in g {
            let zm = link.latent(gm);
            slope.push(link.latent_slope(gm, zm));
            z.push(zm);
        }
        z.push(f64::INFINITY);
        Ok(MarginEval {
            g: g.to_vec(),
            dens: g.iter().map(|&v| link.pdf(v)).collect(),
            pmf,
            z,
            slope,
        })
    }

    pub fn q(&self) -> usize {
        self.g.len()
    }

    /// Non-zero entries `(component, value)` of the score at 0-based category `c`.
    #[inline]
    pub fn score_entries(&self, c: usize) -> [(usize, f64); 2] {
        let f = self.pmf[c];
        let up = if c < self.q() { (c, self.dens[c] / f) } else { (0, 0.0) };
        let down = if c > 0 {
            (c - 1, -self.dens[c - 1] / f)
        } else {
            (0, 0.0)
        };
        [up, down]
    }

    pub fn score(&self, c: usize) -> Vec<f64> {
        let mut s = vec![0.0; self.q()];
        for (m, v) in self.score_entries(c) {
            s[m] += v;
        }
        s
    }

    pub fn expected_hessian(&self) -> DMatrix<f64> {
        let q = self.q();
        let mut h = DMatrix::zeros(q, q);
        for m in 0..q {
            let d = self.dens[m];
            h[(m, m)] = -d * d * (1.0 / self.pmf[m] + 1.0 / self.pmf[m + 1]);
            if m + 1 < q {
                let v = d * self.dens[m + 1] / self.pmf[m + 1];
                h[(m, m + 1)] = v;
                h[(m + 1, m)] = v;
            }
        }
        h
    }
}
