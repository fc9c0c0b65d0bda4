//! Bivariate normal distribution function, density and rectangle probabilities.
//!
//! The distribution function follows Genz's refinement of the
//! Drezner–Wesolowsky method: Gauss–Legendre integration of the Plackett
//! derivative in `asin(rho)` for moderate correlation, and an asymptotic
//! expansion around `|rho| = 1` otherwise. Absolute error is near 1e-15.

use super::normal::{cdf, pdf, FRAC_1_2PI};
use super::quadrature::cached_rule;
use super::RectangleBounds;
use crate::error::{Result, WclError};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;
const SQRT_TWO_PI: f64 = 2.506_628_274_631_000_5;

/// P(X > h, Y > k) for a standard bivariate normal pair with correlation `r`.
fn upper_orthant(h: f64, k: f64, r: f64) -> f64 {
    let ra = r.abs();
    let n = if ra < 0.3 {
        6
    } else if ra < 0.75 {
        12
    } else {
        20
    };
    let (xs, ws) = cached_rule(n);
    let mut k = k;
    let mut hk = h * k;
    let mut bvn = 0.0;
    if ra < 0.925 {
        if ra > 0.0 {
            let hs = 0.5 * (h * h + k * k);
            let asr = r.asin();
            for (x, w) in xs.iter().zip(ws) {
                let sn = (asr * 0.5 * (x + 1.0)).sin();
                bvn += w * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
            }
            bvn *= asr / (2.0 * TWO_PI);
        }
        return bvn + cdf(-h) * cdf(-k);
    }
    if r < 0.0 {
        k = -k;
        hk = -hk;
    }
    if ra < 1.0 {
        let a_s = (1.0 - r) * (1.0 + r);
        let mut a = a_s.sqrt();
        let b_s = (h - k) * (h - k);
        let c = (4.0 - hk) / 8.0;
        let d = (12.0 - hk) / 16.0;
        let expo = -0.5 * (b_s / a_s + hk);
        if expo > -700.0 {
            bvn = a * expo.exp() * (1.0 - c * (b_s - a_s) * (1.0 - d * b_s / 5.0) / 3.0 + c * d * a_s * a_s / 5.0);
        }
        if hk > -160.0 {
            let b = b_s.sqrt();
            bvn -= (-0.5 * hk).exp() * SQRT_TWO_PI * cdf(-b / a) * b * (1.0 - c * b_s * (1.0 - d * b_s / 5.0) / 3.0);
        }
        a *= 0.5;
        for (x, w) in xs.iter().zip(ws) {
            let t = a * (x + 1.0);
            let x_s = t * t;
            let r_s = (1.0 - x_s).sqrt();
            let expo = -0.5 * (b_s / x_s + hk);
            if expo > -700.0 {
                bvn += a
                    * w
                    * expo.exp()
                    * ((-hk * x_s / (2.0 * (1.0 + r_s) * (1.0 + r_s))).exp() / r_s - (1.0 + c * x_s * (1.0 + d * x_s)));
            }
        }
        bvn = -bvn / TWO_PI;
    }
    if r > 0.0 {
        bvn + cdf(-h.max(k))
    } else {
        let mut v = -bvn;
        if k > h {
            if h < 0.0 {
                v += cdf(k) - cdf(h);
            } else {
                v += cdf(-h) - cdf(-k);
            }
        }
        v.max(0.0)
    }
}

/// Bivariate normal distribution function `P(X <= h, Y <= k)`; infinite
/// arguments short-circuit.
pub fn bvn_cdf(h: f64, k: f64, rho: f64) -> f64 {
    if h == f64::NEG_INFINITY || k == f64::NEG_INFINITY {
        return 0.0;
    }
    if h == f64::INFINITY {
        return cdf(k);
    }
    if k == f64::INFINITY {
        return cdf(h);
    }
    if rho == 0.0 {
        return cdf(h) * cdf(k);
    }
    upper_orthant(-h, -k, rho).clamp(0.0, 1.0)
}

/// Distribution function at a fixed correlation, with the quadrature terms
/// that depend only on `rho` precomputed. Used when one correlation is
/// evaluated on many grid points.
#[derive(Debug, Clone)]
pub struct BvnFixed {
    rho: f64,
    // (sin value, 1/(1 - sin^2), scaled weight) for |rho| < 0.925
    terms: Vec<(f64, f64, f64)>,
}

impl BvnFixed {
    pub fn new(rho: f64) -> Self {
        let ra = rho.abs();
        let mut terms = Vec::new();
        if ra > 0.0 && ra < 0.925 {
            let n = if ra < 0.3 {
                6
            } else if ra < 0.75 {
                12
            } else {
                20
            };
            let (xs, ws) = cached_rule(n);
            let asr = rho.asin();
            for (x, w) in xs.iter().zip(ws) {
                let sn = (asr * 0.5 * (x + 1.0)).sin();
                terms.push((sn, 1.0 / (1.0 - sn * sn), w * asr / (2.0 * TWO_PI)));
            }
        }
        BvnFixed { rho, terms }
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// `P(X <= h, Y <= k)`.
    #[inline]
    pub fn cdf(&self, h: f64, k: f64) -> f64 {
        if self.terms.is_empty() {
            return bvn_cdf(h, k, self.rho);
        }
        if h == f64::NEG_INFINITY || k == f64::NEG_INFINITY {
            return 0.0;
        }
        if h == f64::INFINITY {
            return cdf(k);
        }
        if k == f64::INFINITY {
            return cdf(h);
        }
        self.cdf_finite(h, k, cdf(h), cdf(k))
    }

    /// As `cdf` for finite arguments whose univariate distribution values
    /// are already known.
    #[inline]
    pub fn cdf_finite(&self, h: f64, k: f64, ch: f64, ck: f64) -> f64 {
        if self.terms.is_empty() {
            return bvn_cdf(h, k, self.rho);
        }
        let hk = h * k;
        let hs = 0.5 * (h * h + k * k);
        let mut v = 0.0;
        for &(sn, inv, w) in &self.terms {
            v += w * ((sn * hk - hs) * inv).exp();
        }
        (v + ch * ck).clamp(0.0, 1.0)
    }
}

/// Standard bivariate normal density; zero when either argument is infinite.
pub fn bvn_pdf(x: f64, y: f64, rho: f64) -> f64 {
    if x.is_infinite() || y.is_infinite() {
        return 0.0;
    }
    let om = 1.0 - rho * rho;
    FRAC_1_2PI / om.sqrt() * (-(x * x - 2.0 * rho * x * y + y * y) / (2.0 * om)).exp()
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho.abs() < 1.0) {
        return Err(WclError::Domain(format!("bivariate correlation {rho} outside (-1, 1)")));
    }
    Ok(())
}

fn check_bivariate(b: &RectangleBounds) -> Result<()> {
    if b.dim() != 2 {
        return Err(WclError::Domain(format!(
            "bivariate rectangle needs 2 coordinates, got {}",
            b.dim()
        )));
    }
    Ok(())
}

/// Probability of the rectangle `(l1, u1] x (l2, u2]`.
pub fn bvn_rectangle(b: &RectangleBounds, rho: f64) -> Result<f64> {
    check_bivariate(b)?;
    check_rho(rho)?;
    Ok(rectangle(b.lower()[0], b.upper()[0], b.lower()[1], b.upper()[1], rho))
}

/// Unchecked rectangle probability from the four corners.
#[inline]
pub(crate) fn rectangle(l1: f64, u1: f64, l2: f64, u2: f64, rho: f64) -> f64 {
    let v = bvn_cdf(u1, u2, rho) - bvn_cdf(l1, u2, rho) - bvn_cdf(u1, l2, rho) + bvn_cdf(l1, l2, rho);
    v.clamp(0.0, 1.0)
}

/// Derivative of the rectangle probability in `rho`, via the Plackett
/// identity applied at the four corners.
pub fn bvn_rho_derivative(b: &RectangleBounds, rho: f64) -> Result<f64> {
    check_bivariate(b)?;
    check_rho(rho)?;
    let (l1, u1, l2, u2) = (b.lower()[0], b.upper()[0], b.lower()[1], b.upper()[1]);
    Ok(bvn_pdf(u1, u2, rho) - bvn_pdf(l1, u2, rho) - bvn_pdf(u1, l2, rho) + bvn_pdf(l1, l2, rho))
}

/// `d/dh P(X <= h, Y <= k) = pdf(h) * cdf((k - rho h)/sqrt(1 - rho^2))`.
#[inline]
pub fn bvn_cdf_dh(h: f64, k: f64, rho: f64) -> f64 {
    if h.is_infinite() || k == f64::NEG_INFINITY {
        return 0.0;
    }
    if k == f64::INFINITY {
        return pdf(h);
    }
    pdf(h) * cdf((k - rho * h) / (1.0 - rho * rho).sqrt())
}
