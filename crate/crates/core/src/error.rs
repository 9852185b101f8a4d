use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input lies outside the domain of an operation (out-of-range pixel,
    /// non-finite angle, zero vector, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A reprojected point coincides with the destination camera center.
    #[error("degenerate point: reprojected point coincides with the camera center")]
    DegeneratePoint,

    #[error("invalid pose: {0}")]
    InvalidPose(String),

    #[error("dimension error: {0}")]
    Dimensions(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed file: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("duplicate frame id '{0}' in manifest")]
    DuplicateFrameId(String),

    #[error("no frame reaches the sharpness threshold")]
    NoSharpFrame,

    #[error("evaluation mask selects no pixels")]
    EmptyMask,

    #[error("missing depth: {0}")]
    MissingDepth(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
