//! Crate-wide error type.
//!
//! A single enum covers every failure class in the crate; variants carry a
//! short human-readable message (plus structured detail where callers are
//! expected to branch on it, e.g. solver iteration counts and parse line
//! numbers).

use alloc::string::String;

/// Convenience alias used throughout the crate.
pub type Result<T> = core::result::Result<T, Error>;

/// Unified error type for the toolkit.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A value violates an arbitrage or ordering bound.
    #[error("bounds error: {0}")]
    Bounds(String),
    /// An iterative solver failed to converge.
    #[error("solver error after {iterations} iterations: {message}")]
    Solver { message: String, iterations: u32 },
    /// A least-squares or model fit could not be computed.
    #[error("fit error: {0}")]
    Fit(String),
    /// Invalid or inconsistent configuration.
    #[error("config error: {0}")]
    Config(String),
    /// Input data violates a precondition (ordering, emptiness, duplicates).
    #[error("data error: {0}")]
    Data(String),
    /// Tensor or vector dimensions do not match.
    #[error("shape error: {0}")]
    Shape(String),
    /// A serialized artifact is malformed, truncated, or of the wrong kind.
    #[error("format error: {0}")]
    Format(String),
    /// Text input failed to parse.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    /// Incompatible mode for the data at hand.
    #[error("mode error: {0}")]
    Mode(String),
    /// Training diverged (non-finite loss).
    #[error("training diverged: {0}")]
    Diverged(String),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
    pub fn bounds(msg: impl Into<String>) -> Self {
        Error::Bounds(msg.into())
    }
    pub fn fit(msg: impl Into<String>) -> Self {
        Error::Fit(msg.into())
    }
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
    pub fn mode(msg: impl Into<String>) -> Self {
        Error::Mode(msg.into())
    }
}
