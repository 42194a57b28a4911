use alloc::string::String;
use core::fmt;

/// Failure modes shared by every stage of the segmentation pipeline.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Shapes, sizes or parameter values that violate an operation's preconditions.
    InvalidArgument(String),
    /// A well-formed input that leaves the computation without a defined state,
    /// e.g. an empty global cluster.
    InvalidState(String),
    /// Training produced a non-finite loss.
    Diverged { epoch: usize },
    /// A metric whose denominator is empty.
    UndefinedMetric(String),
    /// An exhaustive search that would exceed its size limit.
    TooLarge(String),
    /// A numerical routine failed to converge or produced non-finite output.
    Numerical(String),
}

pub type Result<T> = core::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::InvalidState(msg) => write!(f, "invalid state: {msg}"),
            Error::Diverged { epoch } => write!(f, "training diverged in epoch {epoch}"),
            Error::UndefinedMetric(msg) => write!(f, "undefined metric: {msg}"),
            Error::TooLarge(msg) => write!(f, "instance too large: {msg}"),
            Error::Numerical(msg) => write!(f, "numerical failure: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

macro_rules! invalid {
    ($($arg:tt)*) => {
        $crate::error::Error::InvalidArgument(alloc::format!($($arg)*))
    };
}
pub(crate) use invalid;
