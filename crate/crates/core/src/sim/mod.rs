//! Data generation under the simulation designs and replication studies.

pub mod design;

pub use design::{
    discretize, draw_latent, equal_probit_cutpoints, gen_design_covariates, sample_ordinal_mvn, DesignKind, SimDesign,
    LONGITUDINAL_R,
};
pub mod study;

pub use study::{
    replication_study, run_replication, summarize, MethodFit, ParameterSummary, ReplicationRecord, ReplicationSummary,
    StudyManifest, MAX_FAILURE_RATE,
};
