use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension { context: &'static str, expected: usize, actual: usize },

    #[error("covariance factorization failed after jitter ladder {ladder:?}")]
    Factorization { ladder: Vec<f64> },

    #[error("non-finite marginal likelihood at iteration {iteration} (parameters {parameters:?})")]
    NonFinite { iteration: usize, parameters: Vec<f64> },

    #[error("conjugate gradients stopped after {iterations} iterations at relative residual {residual:e}")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("trial {trial} (ranker {ranker}, F={final_candidates}, C={training_curves}): {source}")]
    Trial { ranker: &'static str, final_candidates: usize, training_curves: usize, trial: usize, source: Box<Error> },
}

impl Error {
    /// True for failures of the numerical machinery (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Factorization { .. } | Error::NonFinite { .. } | Error::NotConverged { .. } => true,
            Error::Trial { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

macro_rules! invalid {
    ($($arg:tt)*) => { $crate::error::Error::InvalidInput(alloc::format!($($arg)*)) };
}
macro_rules! invalid_spec {
    ($($arg:tt)*) => { $crate::error::Error::InvalidSpec(alloc::format!($($arg)*)) };
}
pub(crate) use invalid;
pub(crate) use invalid_spec;
