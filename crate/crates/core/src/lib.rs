//! Multi-scale saliency enhancement for black-box image classifiers.
//!
//! The crate wraps any base saliency extractor ([`saliency`]) and improves
//! its maps by explaining many windows of a rescaled image pyramid and
//! fusing the results ([`pipeline`]). Models are reached only through
//! forward passes ([`backend`]). [`metrics`] scores the resulting maps.

pub mod backend;
pub mod error;
pub mod imgproc;
pub mod metrics;
pub mod pipeline;
pub mod render;
pub mod saliency;

pub use backend::{ClassifierBackend, ModelMeta, QuadrantMock, ScoreMatrix, ScoreMode};
#[cfg(feature = "onnx")]
pub use backend::{load_model, OnnxBackend};
pub use error::{ErrorCategory, Result, SessError};
pub use imgproc::{GrayMap, RasterImage, Sampling};
pub use metrics::{CurveResult, PointingResult};
pub use pipeline::{run_sess, run_sess_detailed, CalibratedStack, PatchSpec, SessConfig, SessRun};
pub use saliency::{BaseMethodConfig, BaseSaliencyMethod};
