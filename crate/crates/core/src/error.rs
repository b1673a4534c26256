use thiserror::Error;

/// Errors raised while building or solving a problem instance.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(
        "non-matching meshes across the macro edge between subdomains {first} and {second} (m = {first_m} vs {second_m})"
    )]
    MatchingViolation {
        first: usize,
        second: usize,
        first_m: usize,
        second_m: usize,
    },

    #[error("degenerate triangle (signed area {0:e})")]
    DegenerateElement(f64),

    #[error("matrix is not symmetric positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("unknown output format '{0}'")]
    UnknownFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}
