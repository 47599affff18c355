use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter violates the domain of the operation. `name` is the
    /// offending constraint as it would appear in a config file.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("input length mismatch: {what} ({left} vs {right})")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("degenerate frame: {0}")]
    DegenerateFrame(String),

    #[error("no positive-rate optimum: {0}")]
    NoPositiveRate(String),

    #[error("threshold optimizer did not converge after {evaluations} objective evaluations")]
    NonConvergence { evaluations: usize },

    #[error("reconciliation failed: {0}")]
    ReconciliationFailed(String),

    #[error("transcript error: {0}")]
    Transcript(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
