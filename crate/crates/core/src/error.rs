//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("pgm: malformed header: {0}")]
    PgmMalformedHeader(String),

    #[error("pgm: unsupported format magic {0:?} (expected P5)")]
    PgmUnsupportedFormat(String),

    #[error("pgm: unsupported maxval {0} (expected 255 or 65535)")]
    PgmUnsupportedMaxval(u32),

    #[error("pgm: truncated payload: expected {expected} bytes, got {got}")]
    PgmTruncated { expected: usize, got: usize },

    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),

    #[error("non-finite pixel value at index {index}")]
    NonFinitePixel { index: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("out of bounds: {0}")]
    OutOfBounds(String),

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("patch grid mismatch: {0}")]
    GridMismatch(String),

    #[error("cg did not converge: residual {residual:.3e} after {iterations} iterations")]
    CgNoConvergence { iterations: usize, residual: f64 },

    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),

    #[error("degenerate image: {0}")]
    DegenerateImage(String),

    #[error("instance too large for dense oracle: {pixels} pixels (max {max})")]
    OracleTooLarge { pixels: usize, max: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
