//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by the numeric and training layers.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    /// A matrix that must be Hermitian failed the Frobenius-norm check.
    #[error("matrix is not Hermitian within tolerance")]
    NotHermitian,

    /// Two operands have incompatible matrix dimensions.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Vector/matrix shapes disagree with the network layer dimensions.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// An aggregation was asked for on an empty collection.
    #[error("empty input")]
    EmptyInput,

    /// A sequence is too short for the requested operation.
    #[error("sequence too short: need at least {min} entries, got {got}")]
    TooShort { min: usize, got: usize },

    /// A perturbation channel name is not one of the known channels.
    #[error("unknown sweep channel: {0}")]
    UnknownChannel(String),

    /// A scenario produced a non-positive effective slice duration.
    #[error("scenario yields non-positive slice duration at slice {slice}")]
    NegativeDuration { slice: usize },

    /// A run configuration is internally inconsistent.
    #[error("config error: {0}")]
    ConfigError(String),
}

pub type Result<T> = std::result::Result<T, Error>;
