//! Library-wide error type.

/// Errors surfaced by state handling, targets, kernels, and the driver.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument violated a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A name was looked up in a position or target that does not declare it.
    #[error("unknown name `{0}`")]
    UnknownName(String),

    /// A name occurred more than once where names must be unique.
    #[error("duplicate name `{0}`")]
    DuplicateName(String),

    /// Two tensor-structured values that must share a structure do not.
    #[error("structure mismatch: {0}")]
    StructureMismatch(String),

    /// An index was outside the valid range of a buffer.
    #[error("index {index} out of bounds for length {len}")]
    OutOfBounds { index: usize, len: usize },

    /// A target log-density evaluated to NaN, which is never meaningful.
    #[error("log-density evaluated to NaN at {0}")]
    NanLogDensity(String),

    /// A chain was started from a position with non-finite log-density.
    #[error("initial log-density is not finite at {0}")]
    NonFiniteInitialDensity(String),

    /// An info record did not carry the acceptance flag a consumer required.
    #[error("info record has no `is_accepted` field")]
    MissingAcceptanceFlag,

    /// Reading or writing an artifact failed.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
