//! Error type shared by all modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside its admissible range.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A tabulated function was queried outside its sampled range.
    #[error("out of tabulated range: {0}")]
    OutOfRange(String),

    /// A field evaluation produced a non-finite value.
    #[error("non-finite value in {field} at {location}")]
    NonFinite { field: String, location: String },

    /// Grids of two operands do not match.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// The mass constraint could not be bracketed by the multiplier search.
    #[error("unsolvable mass constraint: {0}")]
    UnsolvableConstraint(String),

    /// The structural conditions failed and the caller did not override.
    #[error("structural conditions violated: {0}")]
    ConditionsViolated(String),
}

pub type Result<T> = std::result::Result<T, Error>;
