//! Error types shared across the crate.

use alloc::string::String;
use core::fmt;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq)]
pub enum CoreError {
    /// An input that must be finite was NaN or infinite.
    NonFinite(&'static str),
    /// A configuration invariant was violated.
    Config(String),
    /// Array shapes of two operands do not line up.
    ShapeMismatch(&'static str),
    /// A tape contract was violated (e.g. seeding a non-scalar node).
    Contract(&'static str),
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::NonFinite(what) => write!(f, "non-finite value in {what}"),
            CoreError::Config(msg) => write!(f, "invalid configuration: {msg}"),
            CoreError::ShapeMismatch(what) => write!(f, "shape mismatch in {what}"),
            CoreError::Contract(what) => write!(f, "contract violation: {what}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for CoreError {}

pub type CoreResult<T> = core::result::Result<T, CoreError>;
