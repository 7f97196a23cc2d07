use thiserror::Error;

/// Errors raised by model construction, fitting and simulation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("permutation outside the support (displaced {displaced} > bound {bound})")]
    OutOfSupport { displaced: usize, bound: usize },

    #[error("exhaustive enumeration limited to n <= {max}, got n = {n}")]
    TooLarge { n: usize, max: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
