use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the fitting and evaluation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid basis: {0}")]
    InvalidBasis(String),

    #[error("invalid interval [{lo}, {hi}]: lower bound must be below upper bound")]
    InvalidInterval { lo: f64, hi: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("point {point} lies outside the domain [{lo}, {hi}]")]
    Domain { point: f64, lo: f64, hi: f64 },

    #[error("underdetermined fit: {samples} sample points for {n_basis} basis functions")]
    Underdetermined { samples: usize, n_basis: usize },

    #[error("ill-conditioned system: {0}")]
    IllConditioned(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("insufficient data: need at least {needed} curves, found {found}")]
    InsufficientData { needed: usize, found: usize },

    #[error("class {class} has {found} curves; at least {needed} are required")]
    InsufficientClassData {
        class: usize,
        needed: usize,
        found: usize,
    },

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("every input function was discarded as numerically zero")]
    AllZero,

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("{path}:{line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("incompatible model: {0}")]
    Incompatible(String),

    #[error("model file: {0}")]
    ModelFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// True for failures that stem from the numerical content of the data
    /// rather than from malformed input or usage.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::IllConditioned(_)
                | Error::Degenerate(_)
                | Error::AllZero
                | Error::InsufficientData { .. }
                | Error::InsufficientClassData { .. }
                | Error::Underdetermined { .. }
        )
    }
}
