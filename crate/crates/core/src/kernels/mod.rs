//! Gaussian building blocks: univariate normal functions, bivariate
//! distribution function and rectangles with their correlation derivative,
//! rectangles up to dimension four, and the one-factor integral for
//! exchangeable correlation.

pub mod bvn;
pub mod exchangeable;
pub mod mvn;
pub mod normal;
pub mod quadrature;

pub use bvn::{bvn_cdf, bvn_pdf, bvn_rectangle, bvn_rho_derivative, BvnFixed};
pub use exchangeable::{exchangeable_rectangle, FactorRule};
pub use mvn::{cdf_grid, mvn_cdf_small, mvn_rectangle_small, rectangle_small, rectangle_table, SmallCorr};
pub use normal::std_normal;
pub use quadrature::QuadratureSpec;

use crate::error::{Result, WclError};

/// Axis-aligned box with extended-real bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct RectangleBounds {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl RectangleBounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(WclError::Domain(format!(
                "bounds need equal non-zero lengths, got {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        for (k, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if l.is_nan() || u.is_nan() || l > u {
                return Err(WclError::Domain(format!(
                    "invalid interval ({l}, {u}] at coordinate {k}"
                )));
            }
        }
        Ok(RectangleBounds { lower, upper })
    }

    /// `(-inf, u_1] x ... x (-inf, u_m]`.
    pub fn lower_orthant(upper: &[f64]) -> Self {
        RectangleBounds {
            lower: vec![f64::NEG_INFINITY; upper.len()],
            upper: upper.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }
}
