use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sess_core::pipeline::{SessRun, StageTiming};
use sess_core::saliency::BaseMethodConfig;
use sess_core::{PatchSpec, SessConfig, SessError};

use crate::opts::ModelRecord;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatchRow {
    pub index: usize,
    #[serde(flatten)]
    pub spec: PatchSpec,
    pub score: f32,
    pub kept: bool,
}

impl PatchRow {
    pub fn table(run: &SessRun) -> Vec<PatchRow> {
        let mut kept = vec![false; run.specs.len()];
        for &i in &run.kept {
            kept[i] = true;
        }
        run.specs
            .iter()
            .zip(&run.scores)
            .enumerate()
            .map(|(index, (&spec, &score))| PatchRow {
                index,
                spec,
                score,
                kept: kept[index],
            })
            .collect()
    }
}

/// Everything needed to repeat a saliency run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: u32,
    pub command: String,
    pub image: PathBuf,
    /// `(height, width)` of the image and of every raster output.
    pub dims: (usize, usize),
    pub class: usize,
    pub model: ModelRecord,
    pub config: SessConfig,
    pub base: BaseMethodConfig,
    pub seed: u64,
    /// Raster encoding of `saliency.f32`.
    pub raster: String,
    #[serde(default = "default_alpha")]
    pub overlay_alpha: f32,
    pub patches: Vec<PatchRow>,
    pub timings: Vec<StageTiming>,
    /// Output name to path.
    pub outputs: BTreeMap<String, PathBuf>,
}

fn default_alpha() -> f32 {
    0.5
}

impl RunManifest {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SessError::io(path, e))?;
        let m: RunManifest = serde_json::from_str(&text)
            .map_err(|e| SessError::invalid(format!("{}: {e}", path.display())))?;
        if m.version != MANIFEST_VERSION {
            return Err(SessError::invalid(format!(
                "manifest version {} is not supported (expected {MANIFEST_VERSION})",
                m.version
            ))
            .into());
        }
        Ok(m)
    }
}
