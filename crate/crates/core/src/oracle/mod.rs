//! Full-likelihood baselines: joint pmf and log-likelihood, expected
//! information under exchangeable correlation, maximum likelihood fits and
//! the asymptotic efficiency table.

pub mod fisher;
pub mod likelihood;
pub mod ml;

pub use fisher::{
    asymptotic_variance_table, cluster_information, fisher_information, table_to_csv, EfficiencyConfig, EfficiencyRow,
};
pub use likelihood::{check_capability, cluster_pmf, cluster_pmf_grad, full_loglik, EXACT_MAX_DIM};
pub use ml::{loglik_gradient, ml_fit};
