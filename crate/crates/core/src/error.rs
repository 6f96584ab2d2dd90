//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PmhError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// Codebook file has the wrong magic bytes or an unsupported version.
    #[error("codebook format/version mismatch: {0}")]
    FormatVersionMismatch(String),

    /// Codebook file failed its CRC32 integrity check (also raised for
    /// truncated files).
    #[error("codebook checksum mismatch")]
    ChecksumMismatch,

    /// A loaded or constructed codebook violates a structural invariant.
    #[error("invalid codebook: {0}")]
    InvalidCodebook(String),

    /// Pilot Gram matrix X X^H is numerically rank-deficient.
    #[error("singular pilot Gram matrix (condition estimate {0:.3e})")]
    SingularPilotGram(f64),

    /// Responsibility-weighted codeword Gram matrix is ill-conditioned;
    /// the sample set is too small or degenerate.
    #[error("singular weighted Gram matrix (condition estimate {0:.3e})")]
    SingularWeightedGram(f64),

    /// NMSE reference matrix has zero Frobenius norm.
    #[error("zero reference matrix in NMSE")]
    ZeroReference,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, PmhError>;
