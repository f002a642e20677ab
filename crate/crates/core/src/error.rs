use thiserror::Error;

/// Unified error type for the core data model and solvers.
///
/// Numerical *non-convergence* is not an `Error`: solvers report it through
/// [`crate::solver::SolveOutcome`] so that failures can be counted as data.
/// `Error` covers conditions that make a computation ill-posed: malformed
/// input, dimension mismatches, and singular or undefined arithmetic.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{context}: expected dimension {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("dataset '{0}' is empty")]
    EmptyDataset(String),

    #[error("invalid value at row {row}, column {column}: {message}")]
    InvalidCell {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("positivity violation: propensity score undefined at rows {rows:?}")]
    Positivity { rows: Vec<usize> },

    #[error("iptw weight undefined: propensity score {value} lies outside (0, 1)")]
    DegenerateWeight { value: f64 },

    #[error(
        "singular system: reciprocal condition number {rcond:.3e} is below the floor {floor:.3e}"
    )]
    SingularSystem { rcond: f64, floor: f64 },

    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
