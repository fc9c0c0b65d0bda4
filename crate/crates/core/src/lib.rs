pub mod error;
pub mod estimator;
pub mod kernels;
pub mod margins;
pub mod model;
pub mod oracle;
pub mod scores;
pub mod sim;

pub use error::{Result, WclError};
