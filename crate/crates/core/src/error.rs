use alloc::string::String;
use core::fmt;

/// Errors raised by the core algorithms.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A precondition on an argument was violated.
    InvalidArgument(String),
    /// Two objects that must agree on a dimension do not.
    ShapeMismatch(String),
    /// A gradient or statistic contained NaN or infinity.
    NonFinite(&'static str),
    /// Serialised data could not be decoded.
    Format(String),
    /// Validation perplexity blew up past the divergence guard.
    Diverged {
        epoch: usize,
        valid_ppl: f64,
        initial_ppl: f64,
    },
}

pub type Result<T> = core::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::ShapeMismatch(msg) => write!(f, "shape mismatch: {msg}"),
            Error::NonFinite(what) => write!(f, "non-finite value in {what}"),
            Error::Format(msg) => write!(f, "malformed data: {msg}"),
            Error::Diverged {
                epoch,
                valid_ppl,
                initial_ppl,
            } => write!(
                f,
                "training diverged at epoch {epoch}: valid ppl {valid_ppl:.3} > 10x initial {initial_ppl:.3}"
            ),
        }
    }
}

impl core::error::Error for Error {}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn malformed(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}
