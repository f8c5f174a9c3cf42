//! Error type for the command-line tool, carrying the exit-code policy:
//! `1` for configuration mistakes (bad flags, malformed files), `2` for
//! numerical failures encountered mid-computation.

use gphodlr::Error as SolverError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    /// Process exit code this error maps to.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Solver(e) => match e {
                // rejected before any computation started
                SolverError::InvalidParameter { .. }
                | SolverError::InvalidInput(_)
                | SolverError::DimensionMismatch(_) => 1,
                // went wrong during the computation itself
                SolverError::Singular(_)
                | SolverError::Factorization(_)
                | SolverError::SizeGuard(_) => 2,
            },
            _ => 1,
        }
    }
}
