//! Black-box classifier abstraction.
//!
//! A backend maps a batch of fixed-size RGB patches to a `B x num_classes`
//! score matrix. Only forward passes are ever requested.

mod mock;
#[cfg(feature = "onnx")]
mod onnx;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SessError};
use crate::imgproc::RasterImage;

pub use mock::{make_quadrant_mock, QuadrantMock};
#[cfg(feature = "onnx")]
pub use onnx::{load_model, OnnxBackend};

/// Default number of patches per inference call.
pub const DEFAULT_MAX_BATCH: usize = 32;

/// How raw model outputs are turned into per-class scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreMode {
    /// Post-softmax probabilities.
    #[default]
    Softmax,
    /// Raw logits (log-probabilities for graphs that already emit probabilities).
    Logit,
}

/// JSON sidecar describing how to feed an exported model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub input_size: usize,
    pub mean: [f32; 3],
    pub std: [f32; 3],
    pub emits_logits: bool,
    #[serde(default)]
    pub labels: Vec<String>,
}

impl ModelMeta {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| SessError::io(path, e))?;
        let meta: ModelMeta = serde_json::from_str(&text)
            .map_err(|e| SessError::Metadata(format!("{}: {e}", path.display())))?;
        meta.validate()?;
        Ok(meta)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_size == 0 {
            return Err(SessError::Metadata("input_size must be positive".into()));
        }
        if self.std.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(SessError::Metadata(format!(
                "std entries must be positive, got {:?}",
                self.std
            )));
        }
        if self.mean.iter().any(|m| !m.is_finite()) {
            return Err(SessError::Metadata("mean entries must be finite".into()));
        }
        Ok(())
    }
}

/// Row-major `rows x cols` matrix of class scores; row `i` belongs to patch `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl ScoreMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(SessError::Internal(format!(
                "score buffer of {} values does not match {rows}x{cols}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(SessError::Inference(format!(
                "non-finite score at row {}, class {}",
                i / cols.max(1),
                i % cols.max(1)
            )));
        }
        Ok(ScoreMatrix { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, class: usize) -> f32 {
        self.data[i * self.cols + class]
    }

    pub fn column(&self, class: usize) -> Vec<f32> {
        (0..self.rows).map(|i| self.get(i, class)).collect()
    }
}

/// Numerically stable softmax, computed in `f64`.
pub fn softmax(logits: &[f32]) -> Vec<f32> {
    let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let exps: Vec<f64> = logits.iter().map(|&v| (v as f64 - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| (e / sum) as f32).collect()
}

/// A classifier queried only through forward passes.
///
/// Implementations must be deterministic for identical inputs and safe to
/// call from several threads at once.
pub trait ClassifierBackend: Send + Sync {
    /// Side of the square input patch.
    fn input_size(&self) -> usize;

    fn num_classes(&self) -> usize;

    fn score_mode(&self) -> ScoreMode {
        ScoreMode::Softmax
    }

    fn labels(&self) -> &[String] {
        &[]
    }

    /// Short identifier recorded in run manifests.
    fn describe(&self) -> String;

    /// Runs inference on a batch already checked by [`forward_scores`].
    fn infer(&self, batch: &[RasterImage]) -> Result<ScoreMatrix>;
}

/// Validates a batch and returns one score row per patch.
pub fn forward_scores(
    backend: &dyn ClassifierBackend,
    batch: &[RasterImage],
) -> Result<ScoreMatrix> {
    if batch.is_empty() {
        return Err(SessError::invalid("forward called with an empty batch"));
    }
    let side = backend.input_size();
    if let Some(bad) = batch.iter().find(|p| p.dims() != (side, side)) {
        return Err(SessError::DimensionMismatch {
            expected: (side, side),
            got: bad.dims(),
        });
    }
    let scores = backend.infer(batch)?;
    if scores.rows() != batch.len() || scores.cols() != backend.num_classes() {
        return Err(SessError::Inference(format!(
            "backend returned {}x{} scores for a batch of {} over {} classes",
            scores.rows(),
            scores.cols(),
            batch.len(),
            backend.num_classes()
        )));
    }
    Ok(scores)
}

/// Class-`class` scores for any number of patches, chunked into batches of
/// at most `max_batch`. Output order follows input order.
pub fn class_scores(
    backend: &dyn ClassifierBackend,
    patches: &[RasterImage],
    class: usize,
    max_batch: usize,
) -> Result<Vec<f32>> {
    check_class(backend, class)?;
    let mut out = Vec::with_capacity(patches.len());
    for chunk in patches.chunks(max_batch.max(1)) {
        out.extend(forward_scores(backend, chunk)?.column(class));
    }
    Ok(out)
}

pub fn check_class(backend: &dyn ClassifierBackend, class: usize) -> Result<()> {
    if class >= backend.num_classes() {
        return Err(SessError::invalid(format!(
            "class {class} out of range for a {}-class model",
            backend.num_classes()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_rows_sum_to_one() {
        let p = softmax(&[1.0, 2.0, 3.0, -100.0]);
        assert!((p.iter().sum::<f32>() - 1.0).abs() < 1e-6);
        assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(p[2] > p[1] && p[1] > p[0]);
        let p = softmax(&[1000.0, 1000.0]);
        assert_eq!(p, vec![0.5, 0.5]);
    }

    #[test]
    fn meta_validation() {
        let good = r#"{"input_size": 224, "mean": [0.485, 0.456, 0.406],
            "std": [0.229, 0.224, 0.225], "emits_logits": true, "labels": ["a", "b"]}"#;
        let meta: ModelMeta = serde_json::from_str(good).unwrap();
        meta.validate().unwrap();
        let mut bad = meta.clone();
        bad.std[1] = 0.0;
        assert!(matches!(bad.validate(), Err(SessError::Metadata(_))));
    }

    #[test]
    fn meta_missing_field_is_metadata_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("meta.json");
        std::fs::write(&path, r#"{"input_size": 224}"#).unwrap();
        assert!(matches!(ModelMeta::load(&path), Err(SessError::Metadata(_))));
        assert!(matches!(
            ModelMeta::load(dir.path().join("absent.json")),
            Err(SessError::FileNotFound(_))
        ));
    }
}
