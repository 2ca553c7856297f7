use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("invalid voxel size {0} (must be > 0)")]
    InvalidVoxelSize(f64),

    #[error("nearest-neighbor index built on empty data")]
    EmptyIndex,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("too few correspondences: need at least 3, got {0}")]
    TooFewCorrespondences(usize),

    #[error("no valid triplets: all {sampled} sampled triplets were rejected")]
    NoValidTriplets { sampled: usize },

    #[error("hough space is empty")]
    EmptyHoughSpace,

    #[error("{path}: malformed file at byte {offset}: {reason}")]
    MalformedFile {
        path: PathBuf,
        offset: u64,
        reason: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn malformed(path: impl Into<PathBuf>, offset: u64, reason: impl Into<String>) -> Self {
        Error::MalformedFile {
            path: path.into(),
            offset,
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
