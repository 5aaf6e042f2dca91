//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes are incompatible.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// An argument was outside its documented domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// The call itself was invalid (empty input, bad flag combination, ...).
    #[error("usage error: {0}")]
    Usage(String),

    /// Training produced a non-finite loss or gradient.
    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },

    /// A gradient entry was NaN or infinite.
    #[error("non-finite gradient entry")]
    NonFiniteGradient,

    /// An ensemble with zero spread cannot be turned into a density estimate.
    #[error("degenerate ensemble: sample standard deviation is zero")]
    DegenerateEnsemble,

    /// A constant column cannot be rank-transformed.
    #[error("degenerate column {0:?}: all values identical")]
    DegenerateColumn(String),

    /// Two density grids do not share the same discretization.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// The metric is not defined for this dimensionality.
    #[error("unsupported dimension: {0}")]
    UnsupportedDimension(String),

    /// CSV ingestion failed.
    #[error("ingestion error: {0}")]
    Ingestion(String),

    /// Parameter file could not be decoded.
    #[error("params file error: {0}")]
    ParamsFormat(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
