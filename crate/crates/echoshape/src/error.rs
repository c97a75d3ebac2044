//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the scattering and reconstruction routines.
#[derive(Debug, Error)]
pub enum Error {
    /// Argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A radius function that is not strictly positive, or a curve that
    /// otherwise cannot be discretized.
    #[error("invalid curve: {0}")]
    InvalidCurve(String),

    /// Mismatched matrix/vector dimensions between caller and callee.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A linear system whose factorization broke down.
    #[error("singular system: {0}")]
    Singular(String),

    /// A least-squares problem without enough independent information.
    #[error("rank deficient: {0}")]
    RankDeficient(String),

    /// Level-set selection failed during the sampling-method reconstruction.
    #[error("no usable level set: {0}")]
    NoLevelSet(String),

    /// Normalization of a constant dataset.
    #[error("zero variance input")]
    ZeroVariance,

    /// Invalid configuration values.
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed model or dataset file.
    #[error("file format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
