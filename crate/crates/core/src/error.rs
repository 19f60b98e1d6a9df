use alloc::string::String;

/// Errors raised by the core library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value produced by {0}")]
    NonFinite(String),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("generation failed: {0}")]
    Generation(String),
    /// The search region holds no points.
    #[error("empty search region")]
    EmptyRegion,
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

macro_rules! invalid {
    ($($arg:tt)*) => {
        $crate::error::Error::InvalidArgument(alloc::format!($($arg)*))
    };
}
pub(crate) use invalid;
