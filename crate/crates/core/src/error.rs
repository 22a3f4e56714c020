use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected length {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    /// The requested maximal-entropy problem has no solution (divergent
    /// normalization, unreachable moment, failed multiplier search).
    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("did not converge after {iterations} iterations: {detail}")]
    NonConvergence { iterations: usize, detail: String },

    /// Malformed user input: file contents, expressions, corpora.
    #[error("input error: {0}")]
    Input(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
