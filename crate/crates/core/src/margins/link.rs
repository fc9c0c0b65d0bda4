//! Cumulative link functions and the map from a shifted cutpoint to its
//! latent normal threshold.

use serde::{Deserialize, Serialize};

use crate::kernels::normal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkFunction {
    Probit,
    Logit,
}

impl std::str::FromStr for LinkFunction {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "probit" => Ok(LinkFunction::Probit),
            "logit" => Ok(LinkFunction::Logit),
            other => Err(format!("unknown link '{other}' (expected probit or logit)")),
        }
    }
}

impl std::fmt::Display for LinkFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LinkFunction::Probit => "probit",
            LinkFunction::Logit => "logit",
        })
    }
}

#[inline]
fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl LinkFunction {
    #[inline]
    pub fn cdf(self, g: f64) -> f64 {
        match self {
            LinkFunction::Probit => normal::cdf(g),
            LinkFunction::Logit => {
                if g == f64::INFINITY {
                    1.0
                } else if g == f64::NEG_INFINITY {
                    0.0
                } else {
                    logistic(g)
                }
            }
        }
    }

    /// `1 - cdf(g)`, computed without cancellation (both links are symmetric).
    #[inline]
    pub fn sf(self, g: f64) -> f64 {
        self.cdf(-g)
    }

    /// Density `F'`.
    #[inline]
    pub fn pdf(self, g: f64) -> f64 {
        if g.is_infinite() {
            return 0.0;
        }
        match self {
            LinkFunction::Probit => normal::pdf(g),
            LinkFunction::Logit => {
                let p = logistic(g);
                p * logistic(-g)
            }
        }
    }

    /// Density derivative `F''`.
    #[inline]
    pub fn dpdf(self, g: f64) -> f64 {
        if g.is_infinite() {
            return 0.0;
        }
        match self {
            LinkFunction::Probit => -g * normal::pdf(g),
            LinkFunction::Logit => {
                let p = logistic(g);
                let s = logistic(-g);
                p * s * (s - p)
            }
        }
    }

    /// Quantile `F^{-1}(p)`.
    pub fn quantile(self, p: f64) -> f64 {
        match self {
            LinkFunction::Probit => normal::quantile(p),
            LinkFunction::Logit => {
                if p <= 0.0 {
                    f64::NEG_INFINITY
                } else if p >= 1.0 {
                    f64::INFINITY
                } else {
                    (p / (1.0 - p)).ln()
                }
            }
        }
    }

    /// Latent threshold `Phi^{-1}(F(g))`, taken from the upper tail for
    /// positive `g` so that large cutpoints keep full precision.
    #[inline]
    pub fn latent(self, g: f64) -> f64 {
        match self {
            LinkFunction::Probit => g,
            LinkFunction::Logit => {
                if g <= 0.0 {
                    normal::quantile(self.cdf(g))
                } else {
                    normal::quantile_upper(self.sf(g))
                }
            }
        }
    }

    /// `d latent / d g = F'(g) / phi(latent(g))`.
    #[inline]
    pub fn latent_slope(self, g: f64, z: f64) -> f64 {
        match self {
            LinkFunction::Probit => 1.0,
            LinkFunction::Logit => {
                let d = normal::pdf(z);
                if d > 0.0 {
                    self.pdf(g) / d
                } else {
                    0.0
                }
            }
        }
    }
}
