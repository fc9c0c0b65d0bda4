//! Command-line workflows: dataset ingestion, configuration, report
//! emission and the `fit` / `simulate` / `efficiency` commands.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod output;
pub mod report;

use wcl_core::WclError;

/// Version of every emitted JSON document.
pub const SCHEMA_VERSION: &str = "1.0";

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_INGESTION: i32 = 3;
pub const EXIT_CONVERGENCE: i32 = 4;
pub const EXIT_CAPABILITY: i32 = 5;

/// Process exit code for an error chain.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<WclError>() {
            return match e.root() {
                WclError::Ingestion(_) => EXIT_INGESTION,
                WclError::NoConvergence { .. } => EXIT_CONVERGENCE,
                WclError::Capability(_) => EXIT_CAPABILITY,
                _ => EXIT_OTHER,
            };
        }
    }
    EXIT_OTHER
}
