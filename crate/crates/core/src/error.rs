use std::path::PathBuf;

/// Shared error taxonomy. Every failure mode in the crate maps onto one
/// variant so callers can classify input problems vs. numeric problems.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("feature dimensions differ: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("matrix must have at least one row and one column")]
    EmptyMatrix,
    #[error("column contains no samples")]
    EmptyColumn,
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("matrix is not symmetric within tolerance")]
    NotSymmetric,
    #[error("matrix is indefinite: eigenvalue {eigenvalue:e} below tolerance")]
    IndefiniteMatrix { eigenvalue: f64 },
    #[error("sample covariance is singular; add samples or drop collinear features")]
    SingularCovariance,
    #[error("invalid distribution spec: {0}")]
    InvalidSpec(String),
    #[error("scale matrix is not positive semidefinite")]
    NonPsdScale,
    #[error("invalid frequency set: {0}")]
    InvalidFrequencies(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("numeric failure: {0}")]
    NumericFailure(String),
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("row {row} has {got} fields, expected {expected}")]
    RaggedRows { row: usize, expected: usize, got: usize },
    #[error("unparseable number at row {row}, column {col}")]
    NonNumeric { row: usize, col: usize },
    #[error("bad magic bytes: not an ECSB file")]
    BadMagic,
    #[error("file truncated: expected {expected} bytes, got {got}")]
    TruncatedFile { expected: u64, got: u64 },
    #[error("{extra} trailing bytes after matrix payload")]
    TrailingBytes { extra: u64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("report serialization failed: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
