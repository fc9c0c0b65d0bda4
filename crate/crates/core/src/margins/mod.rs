//! Ordinal regression margins.

pub mod link;
pub mod ordinal;

pub use link::LinkFunction;
pub use ordinal::{
    ordinal_expected_hessian, ordinal_pmf, ordinal_score, MarginEval, ParameterVector, ShiftedCutpoints,
};
