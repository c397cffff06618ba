//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty vector")]
    EmptyVector,

    #[error("empty dataset")]
    EmptyDataset,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not Hermitian (max asymmetry {asymmetry:.3e})")]
    NotHermitian { asymmetry: f64 },

    #[error("covariance indefinite beyond jitter tolerance (min eigenvalue {min_eigenvalue:.3e})")]
    IndefiniteCovariance { min_eigenvalue: f64 },

    #[error("circulant spectrum has a non-positive eigenvalue; cannot invert")]
    SingularSpectrum,

    #[error("pilot count {users} exceeds pilot length {pilot_len}")]
    PilotOverflow { users: usize, pilot_len: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("bad magic bytes: expected {expected:?}, got {got:?}")]
    BadMagic { expected: [u8; 4], got: [u8; 4] },

    #[error("unsupported format version {got} (expected {expected})")]
    VersionMismatch { expected: u16, got: u16 },

    #[error("file truncated in record {record}")]
    Truncated { record: usize },

    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("record carries no covariance rows (externally ingested data?)")]
    MissingCcm,

    #[error("estimator `{kind}` requires {what}")]
    EstimatorInput { kind: String, what: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
