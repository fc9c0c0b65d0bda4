use thiserror::Error;

/// Errors raised by the estimation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum WclError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate probability {value:e} for {context}")]
    DegenerateProbability { value: f64, context: String },

    #[error("correlation at boundary: {0}")]
    Boundary(String),

    #[error("ill-conditioned matrix in cluster {cluster}: {detail}")]
    Conditioning { cluster: String, detail: String },

    #[error("rank-deficient Hessian; null directions: {0}")]
    RankDeficient(String),

    #[error("no convergence after {iterations} iterations (score norm {score_norm:e})")]
    NoConvergence {
        iterations: usize,
        score_norm: f64,
        last_iterate: Vec<f64>,
    },

    #[error("unsupported configuration: {0}")]
    Capability(String),

    #[error("ingestion error: {0}")]
    Ingestion(String),

    #[error("{stage}: {inner}")]
    Stage { stage: String, inner: Box<WclError> },

    #[error("study failed: {0}")]
    Study(String),

    #[error("io error: {0}")]
    Io(String),
}

impl WclError {
    pub fn at_stage(self, stage: &str) -> WclError {
        WclError::Stage {
            stage: stage.to_string(),
            inner: Box::new(self),
        }
    }

    /// The innermost error, with stage labels stripped.
    pub fn root(&self) -> &WclError {
        match self {
            WclError::Stage { inner, .. } => inner.root(),
            other => other,
        }
    }
}

impl From<std::io::Error> for WclError {
    fn from(e: std::io::Error) -> Self {
        WclError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, WclError>;
