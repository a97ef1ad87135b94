//! Base saliency extractors that explain a single fixed-size patch.
//!
//! Every extractor is black-box: it only issues forward passes through a
//! [`ClassifierBackend`]. Output normalization is left to the caller.

mod external;
mod occlusion;
mod rise;

use serde::{Deserialize, Serialize};

use crate::backend::ClassifierBackend;
use crate::error::Result;
use crate::imgproc::{GrayMap, RasterImage};

pub use external::{external_saliency, ExternalAdapter, ExternalMethod};
pub use occlusion::{occlusion_saliency, Occlusion, OcclusionConfig};
pub use rise::{rise_saliency, rise_saliency_with_masks, rise_masks, Rise, RiseConfig};

/// A saliency extractor for one patch at a time.
pub trait BaseSaliencyMethod: Send + Sync {
    fn name(&self) -> &str;

    /// Forward passes issued per patch.
    fn query_budget(&self) -> usize;

    /// Saliency of `class` for `patch`. `patch_index` identifies the patch
    /// within a run so randomized methods can derive reproducible streams.
    fn extract(
        &self,
        patch: &RasterImage,
        class: usize,
        backend: &dyn ClassifierBackend,
        patch_index: usize,
    ) -> Result<GrayMap>;
}

/// Serializable choice of base method, as accepted by config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BaseMethodConfig {
    Occlusion(OcclusionConfig),
    Rise(RiseConfig),
    External(ExternalAdapter),
}

impl Default for BaseMethodConfig {
    fn default() -> Self {
        BaseMethodConfig::Occlusion(OcclusionConfig::default())
    }
}

impl BaseMethodConfig {
    pub fn build(&self) -> Result<Box<dyn BaseSaliencyMethod>> {
        Ok(match self {
            BaseMethodConfig::Occlusion(cfg) => Box::new(Occlusion::new(cfg.clone())?),
            BaseMethodConfig::Rise(cfg) => Box::new(Rise::new(cfg.clone())?),
            BaseMethodConfig::External(adapter) => Box::new(ExternalMethod::new(adapter.clone())),
        })
    }
}
