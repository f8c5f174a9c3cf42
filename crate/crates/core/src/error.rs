//! Error type shared across the crate.

/// Errors produced by solver construction and use.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    /// A hyperparameter failed validation at construction time.
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    /// Inputs are structurally unusable (empty sets, non-finite data, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Shapes or dimensions do not line up.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A dense block or an inner update system had a zero pivot.
    #[error("singular matrix: {0}")]
    Singular(String),

    /// Factorization could not be completed for a non-singularity reason.
    #[error("factorization failed: {0}")]
    Factorization(String),

    /// A request would materialize more dense data than the guard allows.
    #[error("size guard exceeded: {0}")]
    SizeGuard(String),
}

pub type Result<T> = std::result::Result<T, Error>;
