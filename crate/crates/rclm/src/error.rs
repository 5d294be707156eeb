//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A shape, matrix, or buffer had a size other than the one required.
    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    /// Input collection was empty where at least one element is required.
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    /// Geometry was degenerate (coincident points, zero spread, singular system).
    #[error("singular configuration: {0}")]
    SingularConfiguration(&'static str),

    /// Not enough data to carry out the operation (too few samples, inliers, ...).
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A parameter or configuration value was out of its valid range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// No pose/expression model produced a usable fit for the image.
    #[error("alignment failed: {0}")]
    AlignmentFailed(String),

    /// Text parse error with file/line context (.pts files, face box lists).
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// Model container did not start with the expected magic bytes.
    #[error("not a model container (bad magic)")]
    BadMagic,

    /// Model container version is newer than this build understands.
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u32),

    /// A container chunk failed its checksum.
    #[error("checksum mismatch in chunk '{0}'")]
    ChecksumMismatch(String),

    /// Container ended in the middle of a chunk.
    #[error("truncated container while reading {0}")]
    Truncated(String),

    /// A required container chunk was absent.
    #[error("missing chunk '{0}'")]
    MissingChunk(String),

    /// Malformed payload inside a structurally valid chunk.
    #[error("malformed chunk '{chunk}': {message}")]
    MalformedChunk { chunk: String, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(expected: usize, got: usize, context: &'static str) -> Self {
        Error::DimensionMismatch {
            expected,
            got,
            context,
        }
    }
}
