use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("vertex enumeration supports at most {limit} outcomes, got {n}")]
    DimensionOverflow { n: usize, limit: usize },

    #[error("report {report} is never the unique minimizer")]
    RedundantReport { report: usize },

    #[error("target is not orderable (intersection graph is not a path)")]
    NotOrderable,

    #[error("optimizer did not converge within {max_iters} iterations at p = {p:?}")]
    NoConvergence { max_iters: usize, p: Vec<f64> },

    #[error("surrogate is not differentiable at u = {u:?}")]
    NonDifferentiable { u: Vec<f64> },

    #[error("projection link requires a strong IE verdict with no violation")]
    StrongIERequired,

    #[error("level-set link requires an IE verdict with no violation")]
    IERequired,

    #[error("boundary {boundary}: surrogate level set differs from target boundary (distance {distance:.3e})")]
    BoundaryLevelSetMismatch { boundary: usize, distance: f64 },

    #[error("no positive scaling of the boundary normals is coordinatewise monotone")]
    ScalingInfeasible,

    #[error("boundary certificate failed at boundary {boundary}: {reason}")]
    CertificateFailure { boundary: usize, reason: String },

    #[error("search budget exceeded: {needed} evaluations requested, limit {limit}")]
    SearchBudgetExceeded { needed: u64, limit: u64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
