use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum PacfError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("insufficient examples for matching (need at least 2, got {0})")]
    InsufficientExamples(usize),

    #[error("empty matching")]
    EmptyMatching,

    #[error("metric undefined for pair ({0:?}, {1:?})")]
    MetricUndefined(Option<usize>, Option<usize>),

    #[error("kernel undefined for pair ({0:?}, {1:?})")]
    KernelUndefined(Option<usize>, Option<usize>),

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e}, max eigenvalue {max_eigenvalue:e})")]
    NotPsd {
        min_eigenvalue: f64,
        max_eigenvalue: f64,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("Rademacher term dominates; increase m or relax ε (denominator {0:e})")]
    RademacherDominates(f64),

    #[error("sample-complexity fixed point did not converge after {0} iterations")]
    FixedPointDiverged(usize),

    #[error("sample too small for requested fairness/error parameters (alpha_tilde = {alpha_tilde}, gamma_tilde = {gamma_tilde})")]
    SampleTooSmall { alpha_tilde: f64, gamma_tilde: f64 },

    #[error("infeasible or budget exhausted (best constraint slack {best_slack:e})")]
    Infeasible { best_point: Vec<f64>, best_slack: f64 },

    #[error("sign undefined: zero coordinate at index {0}")]
    SignUndefined(usize),

    #[error("bit string has length {got}, expected {expected}")]
    BitLength { expected: usize, got: usize },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, PacfError>;

pub(crate) fn invalid(msg: impl Into<String>) -> PacfError {
    PacfError::InvalidInput(msg.into())
}
