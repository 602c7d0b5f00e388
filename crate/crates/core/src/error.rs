use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid layering: {0}")]
    InvalidLayering(String),

    #[error("SVD did not converge within {sweeps} sweeps")]
    SvdNoConvergence { sweeps: usize },

    #[error("{what} too large: {count} exceeds cap {cap}")]
    TooLarge { what: &'static str, count: u128, cap: u128 },

    #[error("evaluation budget exceeded: {needed} evaluations requested, budget {budget}")]
    BudgetExceeded { needed: u128, budget: u128 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("design condition violated: {0}")]
    DesignCondition(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Coarse classification used by front ends to pick an exit status.
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::SvdNoConvergence { .. } | Error::Numerical(_) => ErrorClass::Numerical,
            Error::TooLarge { .. } | Error::BudgetExceeded { .. } => ErrorClass::Budget,
            _ => ErrorClass::Input,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Input,
    Numerical,
    Budget,
}

pub type Result<T> = std::result::Result<T, Error>;
