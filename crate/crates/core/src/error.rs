use thiserror::Error;

/// Errors raised by the numerical laboratory.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A point or parameter lies outside the domain of the setting or function.
    #[error("domain error: {0}")]
    Domain(String),

    /// Quadrature or a fit did not reach the requested accuracy.
    #[error("accuracy error: {what} (best estimate {best:e}, error estimate {error:e})")]
    Accuracy { what: String, best: f64, error: f64 },

    /// An integral that is required to be finite diverges.
    #[error("divergence: {0}")]
    Divergence(String),

    #[error("parse error at {position}: {message} (expected one of: {})", expected.join(", "))]
    Parse {
        position: usize,
        message: String,
        expected: Vec<String>,
    },

    #[error("unknown identifier `{name}` at {position}")]
    UnknownIdentifier { name: String, position: usize },

    #[error("expression is not real-valued: {0}")]
    NonReal(String),

    /// Inconsistent or incomplete experiment parameters.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("basis mismatch: {0}")]
    BasisMismatch(String),

    #[error("eigensolver failure: {0}")]
    Solver(String),

    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn accuracy(what: impl Into<String>, best: f64, error: f64) -> Self {
        Error::Accuracy {
            what: what.into(),
            best,
            error,
        }
    }
}
