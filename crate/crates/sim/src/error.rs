use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{0}")]
    Core(#[from] saddlesim_core::CoreError),

    #[error("runtime error in phase {phase}, round {round}: {source}")]
    Runtime {
        phase: usize,
        round: u64,
        source: saddlesim_core::CoreError,
    },

    #[error("trace schema mismatch: {0}")]
    Schema(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, SimError>;
