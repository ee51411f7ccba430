use thiserror::Error;

/// Errors raised across the merging, training, decoding, and persistence layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid preference: {0}")]
    InvalidPreference(String),

    #[error("beta {beta} outside ({lo}, 1] for n = {n}")]
    BetaOutOfRange { beta: f64, lo: f64, n: usize },

    #[error("weight matrix is singular: eigenvalue {eigenvalue:e} below {threshold:e}")]
    SingularMatrix { eigenvalue: f64, threshold: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("missing artifact: {0}")]
    MissingArtifact(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
