use thiserror::Error;

/// Errors raised by the numeric routines in this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("column {0} is the zero vector")]
    ZeroColumn(usize),

    #[error("non-finite entry at position {0}")]
    NonFinite(usize),

    #[error("{0}")]
    Domain(String),

    #[error("enumeration of {subsets} subsets exceeds the limit of {limit}; use a smaller instance")]
    Capacity { subsets: u128, limit: u128 },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
