//! Rectangle probabilities under positive exchangeable correlation in any
//! dimension, from the one-factor representation
//! `Z_j = sqrt(rho) W + sqrt(1 - rho) E_j`:
//!
//! `P = \int pdf(w) prod_j [cdf((u_j - sqrt(rho) w)/sqrt(1-rho)) - cdf((l_j - sqrt(rho) w)/sqrt(1-rho))] dw`.

use std::sync::OnceLock;

use super::normal::{cdf, pdf};
use super::quadrature::QuadratureSpec;
use super::RectangleBounds;
use crate::error::{Result, WclError};

/// Quadrature nodes for the latent factor with the normal density folded
/// into the weights.
#[derive(Debug, Clone)]
pub struct FactorRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl FactorRule {
    pub fn new(spec: &QuadratureSpec) -> Self {
        let (x, w) = spec.nodes();
        let weights = x.iter().zip(&w).map(|(x, w)| w * pdf(*x)).collect();
        FactorRule { nodes: x, weights }
    }

    /// Rule for the default specification, built once.
    pub fn standard() -> &'static FactorRule {
        static RULE: OnceLock<FactorRule> = OnceLock::new();
        RULE.get_or_init(|| FactorRule::new(&QuadratureSpec::default()))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Conditional interval probability of one coordinate given the factor.
#[inline]
pub fn conditional_interval(lower: f64, upper: f64, sqrt_rho: f64, sqrt_comp: f64, w: f64) -> f64 {
    let shift = sqrt_rho * w;
    let hi = if upper == f64::INFINITY {
        1.0
    } else {
        cdf((upper - shift) / sqrt_comp)
    };
    let lo = if lower == f64::NEG_INFINITY {
        0.0
    } else {
        cdf((lower - shift) / sqrt_comp)
    };
    (hi - lo).max(0.0)
}

/// Rectangle probability under exchangeable correlation `rho in [0, 1)`.
pub fn exchangeable_rectangle(b: &RectangleBounds, rho: f64, q: &QuadratureSpec) -> Result<f64> {
    if !(0.0..1.0).contains(&rho) {
        return Err(WclError::Domain(format!(
            "exchangeable integral needs 0 <= rho < 1, got {rho}"
        )));
    }
    if rho == 0.0 {
        let p = b
            .lower()
            .iter()
            .zip(b.upper())
            .map(|(l, u)| (cdf(*u) - cdf(*l)).max(0.0))
            .product();
        return Ok(p);
    }
    let rule = if *q == QuadratureSpec::default() {
        FactorRule::standard().clone()
    } else {
        FactorRule::new(q)
    };
    Ok(exchangeable_with_rule(b.lower(), b.upper(), rho, &rule))
}

pub fn exchangeable_with_rule(lower: &[f64], upper: &[f64], rho: f64, rule: &FactorRule) -> f64 {
    let sr = rho.sqrt();
    let sc = (1.0 - rho).sqrt();
    let mut total = 0.0;
    for (w, wt) in rule.nodes.iter().zip(&rule.weights) {
        let mut prod = *wt;
        for (l, u) in lower.iter().zip(upper) {
            prod *= conditional_interval(*l, *u, sr, sc, *w);
            if prod == 0.0 {
                break;
            }
        }
        total += prod;
    }
    total.clamp(0.0, 1.0)
}
