use std::process::Command;

use serde::{Deserialize, Serialize};

use crate::backend::ClassifierBackend;
use crate::error::{Result, SessError};
use crate::imgproc::{GrayMap, RasterImage};
use crate::saliency::BaseSaliencyMethod;

/// Command that computes a saliency map out of process.
///
/// The adapter is invoked as `program [args..] REQUEST_DIR`. The directory
/// holds `patch.png` and `request.json` (`{"class_id": N}`); the adapter
/// must write `saliency.f32` (little-endian `f32`, row-major, patch-sized)
/// and exit with status 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalAdapter {
    pub program: String,
    #[serde(default)]
    pub args: Vec<String>,
    /// Queries the adapter reports making per patch; bookkeeping only.
    #[serde(default)]
    pub query_budget: usize,
}

impl ExternalAdapter {
    pub fn new(program: impl Into<String>) -> Self {
        ExternalAdapter {
            program: program.into(),
            args: Vec::new(),
            query_budget: 0,
        }
    }

    /// Splits a shell-style command line on whitespace.
    pub fn parse(cmdline: &str) -> Result<Self> {
        let mut parts = cmdline.split_whitespace().map(str::to_owned);
        let program = parts
            .next()
            .ok_or_else(|| SessError::invalid("empty adapter command"))?;
        Ok(ExternalAdapter {
            program,
            args: parts.collect(),
            query_budget: 0,
        })
    }
}

#[derive(Serialize)]
struct Request {
    class_id: usize,
}

pub fn external_saliency(
    patch: &RasterImage,
    class: usize,
    adapter: &ExternalAdapter,
) -> Result<GrayMap> {
    let dir = tempfile::Builder::new()
        .prefix("sess-adapter-")
        .tempdir()
        .map_err(|e| SessError::io(std::env::temp_dir(), e))?;
    patch.save_png(dir.path().join("patch.png"))?;
    let request = serde_json::to_vec(&Request { class_id: class })
        .map_err(|e| SessError::Internal(e.to_string()))?;
    let req_path = dir.path().join("request.json");
    std::fs::write(&req_path, request).map_err(|e| SessError::io(&req_path, e))?;

    let output = Command::new(&adapter.program)
        .args(&adapter.args)
        .arg(dir.path())
        .output()
        .map_err(|e| SessError::ExternalMethodFailed {
            status: None,
            stderr: format!("could not start `{}`: {e}", adapter.program),
        })?;
    if !output.status.success() {
        return Err(SessError::ExternalMethodFailed {
            status: output.status.code(),
            stderr: String::from_utf8_lossy(&output.stderr).trim().to_owned(),
        });
    }
    let raster = dir.path().join("saliency.f32");
    let bytes = std::fs::read(&raster).map_err(|e| SessError::ExternalMethodFailed {
        status: output.status.code(),
        stderr: format!("adapter produced no readable saliency.f32: {e}"),
    })?;
    GrayMap::from_f32_bytes(patch.height(), patch.width(), &bytes)
}

#[derive(Debug, Clone)]
pub struct ExternalMethod {
    adapter: ExternalAdapter,
}

impl ExternalMethod {
    pub fn new(adapter: ExternalAdapter) -> Self {
        ExternalMethod { adapter }
    }
}

impl BaseSaliencyMethod for ExternalMethod {
    fn name(&self) -> &str {
        "external"
    }

    fn query_budget(&self) -> usize {
        self.adapter.query_budget
    }

    fn extract(
        &self,
        patch: &RasterImage,
        class: usize,
        _backend: &dyn ClassifierBackend,
        _patch_index: usize,
    ) -> Result<GrayMap> {
        external_saliency(patch, class, &self.adapter)
    }
}
