use alloc::string::String;
use core::fmt;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A parameter is outside its admissible range.
    InvalidParameter(String),
    /// A device support does not coincide with a union of mesh elements.
    Misaligned(String),
    /// Vector or matrix dimensions do not agree.
    DimensionMismatch { expected: usize, found: usize },
    /// A factorization met a non-positive pivot.
    NotPositiveDefinite { row: usize },
    /// The iterative solver did not reach its tolerance.
    SolverDiverged { iterations: usize, residual: f64 },
    /// A memory evaluation needs more stored states than the history holds.
    HistoryTooShort { needed: usize, len: usize },
    /// A norm sample used in a log fit is zero, negative or not finite.
    NonPositiveNorm { t: f64 },
}

pub type Result<T> = core::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidParameter(msg) => write!(f, "invalid parameter: {msg}"),
            Error::Misaligned(msg) => write!(f, "support not aligned with mesh: {msg}"),
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::NotPositiveDefinite { row } => {
                write!(f, "matrix is not positive definite (pivot at row {row})")
            }
            Error::SolverDiverged { iterations, residual } => write!(
                f,
                "iterative solver failed after {iterations} iterations (relative residual {residual:e})"
            ),
            Error::HistoryTooShort { needed, len } => {
                write!(f, "history holds {len} states but {needed} are required")
            }
            Error::NonPositiveNorm { t } => write!(f, "non-positive norm sample at t = {t}"),
        }
    }
}

impl core::error::Error for Error {}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
