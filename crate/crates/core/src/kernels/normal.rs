//! Univariate standard normal functions.

use libm::erfc;
use statrs::function::erf::erfc_inv;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
#[inline]
pub fn pdf(x: f64) -> f64 {
    if x.is_infinite() {
        return 0.0;
    }
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal distribution function.
#[inline]
pub fn cdf(x: f64) -> f64 {
    if x == f64::INFINITY {
        1.0
    } else if x == f64::NEG_INFINITY {
        0.0
    } else {
        0.5 * erfc(-x * FRAC_1_SQRT_2)
    }
}

/// Upper tail `1 - cdf(x)`, accurate for large positive `x`.
#[inline]
pub fn sf(x: f64) -> f64 {
    cdf(-x)
}

/// Standard normal quantile; `quantile(0) = -inf`, `quantile(1) = +inf`.
pub fn quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    if p > 0.5 {
        return -lower_quantile(1.0 - p);
    }
    lower_quantile(p)
}

/// Quantile of an upper-tail probability: the `x` with `sf(x) = q`.
pub fn quantile_upper(q: f64) -> f64 {
    -quantile(q)
}

fn lower_quantile(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p <= 0.5);
    let mut x = -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p);
    // one Halley step against the accurate cdf
    let d = pdf(x);
    if d > 0.0 && x.is_finite() {
        let e = (cdf(x) - p) / d;
        x -= e / (1.0 + 0.5 * x * e);
    }
    x
}

/// Cdf, pdf and quantile in one value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StdNormal {
    pub cdf: f64,
    pub pdf: f64,
}

pub fn std_normal(x: f64) -> StdNormal {
    StdNormal {
        cdf: cdf(x),
        pdf: pdf(x),
    }
}

/// `1/(2*pi)`.
pub const FRAC_1_2PI: f64 = 0.5 / PI;
