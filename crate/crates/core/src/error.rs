use std::path::PathBuf;

use thiserror::Error;

use crate::pipeline::PatchSpec;

pub type Result<T, E = SessError> = std::result::Result<T, E>;

/// Every failure the engine can report.
///
/// Variants are grouped by origin so that front ends can map them onto
/// distinct exit codes (see [`SessError::category`]).
#[derive(Debug, Error)]
pub enum SessError {
    #[error("degenerate raster: {height}x{width}")]
    DegenerateImage { height: usize, width: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec error: {0}")]
    Codec(#[from] image::ImageError),

    #[error("malformed metadata: {0}")]
    Metadata(String),

    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    #[error("model inference failed: {0}")]
    Inference(String),

    #[error("external saliency method failed (status {status:?}): {stderr}")]
    ExternalMethodFailed { status: Option<i32>, stderr: String },

    #[error("external saliency raster has {got} bytes, expected {expected}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("external saliency raster contains non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("internal consistency violation: {0}")]
    Internal(String),

    #[error("{source} (patch #{index}, scale {}, origin ({}, {}))", spec.scale_index, spec.origin.0, spec.origin.1)]
    Patch {
        index: usize,
        spec: PatchSpec,
        #[source]
        source: Box<SessError>,
    },
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Input,
    Model,
    Internal,
}

impl SessError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        SessError::InvalidArgument(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            SessError::FileNotFound(path)
        } else {
            SessError::Io { path, source }
        }
    }

    pub fn category(&self) -> ErrorCategory {
        match self {
            SessError::DegenerateImage { .. }
            | SessError::InvalidArgument(_)
            | SessError::DimensionMismatch { .. }
            | SessError::FileNotFound(_)
            | SessError::Io { .. }
            | SessError::Codec(_)
            | SessError::Metadata(_) => ErrorCategory::Input,
            SessError::UnsupportedModel(_)
            | SessError::Inference(_)
            | SessError::ExternalMethodFailed { .. }
            | SessError::ShapeMismatch { .. }
            | SessError::NonFinite { .. } => ErrorCategory::Model,
            SessError::Internal(_) => ErrorCategory::Internal,
            SessError::Patch { source, .. } => source.category(),
        }
    }
}
