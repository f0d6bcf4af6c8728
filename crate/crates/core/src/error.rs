use thiserror::Error;

/// Errors produced by the geometry, design, and learning primitives.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid set: {0}")]
    InvalidSet(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("rank-deficient input: {0}")]
    RankDeficient(String),

    #[error("iteration cap {cap} exceeded in {context}")]
    IterationCap { cap: usize, context: String },

    #[error("solver stalled: gap {gap:.3e} after {iters} iterations (tol {tol:.3e})")]
    SolverStalled { iters: usize, gap: f64, tol: f64 },

    #[error("linear program failed: {0}")]
    LpFailure(String),

    #[error("certification failed: {what} = {value:.6e} exceeds limit {limit:.6e}")]
    CertificationFailed {
        what: String,
        value: f64,
        limit: f64,
    },

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
