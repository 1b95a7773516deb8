use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Errors raised by the core algorithms.
#[derive(Clone, Debug, PartialEq)]
pub enum Error {
    /// Not enough samples (or an empty class/set) for the requested operation.
    InsufficientData(String),
    /// Vector or matrix dimensions do not agree.
    Shape { expected: usize, found: usize },
    /// Cholesky factorization hit a non-positive pivot.
    SingularCovariance { pivot: usize },
    /// An invalid parameter or configuration value.
    Config(String),
    /// An index outside `0..len`, or a repeated index where uniqueness is required.
    Index { index: usize, len: usize },
    /// A timestep outside `1..=T`.
    TimestepRange { t: usize, max: usize },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::InsufficientData(what) => write!(f, "insufficient data: {what}"),
            Self::Shape { expected, found } => {
                write!(f, "shape mismatch: expected dimension {expected}, found {found}")
            }
            Self::SingularCovariance { pivot } => {
                write!(f, "covariance is singular (non-positive pivot at {pivot})")
            }
            Self::Config(msg) => write!(f, "invalid configuration: {msg}"),
            Self::Index { index, len } => {
                write!(f, "index {index} invalid for collection of length {len}")
            }
            Self::TimestepRange { t, max } => write!(f, "timestep {t} outside 1..={max}"),
        }
    }
}

impl core::error::Error for Error {}

pub(crate) fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

pub(crate) fn insufficient(msg: impl Into<String>) -> Error {
    Error::InsufficientData(msg.into())
}
