use std::path::Path;

use tract_onnx::prelude::*;
use tract_onnx::tract_hir::infer::Factoid;

use crate::backend::{softmax, ClassifierBackend, ModelMeta, ScoreMatrix, ScoreMode};
use crate::error::{Result, SessError};
use crate::imgproc::RasterImage;

type Plan = TypedRunnableModel<TypedModel>;

/// ONNX classifier executed on the CPU through tract.
pub struct OnnxBackend {
    plan: Plan,
    meta: ModelMeta,
    num_classes: usize,
    mode: ScoreMode,
    name: String,
}

impl std::fmt::Debug for OnnxBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OnnxBackend")
            .field("name", &self.name)
            .field("input_size", &self.meta.input_size)
            .field("num_classes", &self.num_classes)
            .field("mode", &self.mode)
            .finish()
    }
}

fn unsupported(e: impl std::fmt::Display) -> SessError {
    SessError::UnsupportedModel(e.to_string())
}

fn concrete_dims(fact: &InferenceFact) -> Vec<Option<i64>> {
    fact.shape
        .dims()
        .map(|d| d.concretize().and_then(|d| d.to_i64().ok()))
        .collect()
}

/// Loads an ONNX graph with a single `(B, 3, H, W)` image input.
///
/// Input size and class count are introspected from the graph where it
/// declares them; the sidecar's `input_size` must agree with a declared
/// spatial size.
pub fn load_model(path: impl AsRef<Path>, meta: ModelMeta) -> Result<OnnxBackend> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(SessError::FileNotFound(path.to_path_buf()));
    }
    meta.validate()?;
    let model = tract_onnx::onnx()
        .model_for_path(path)
        .map_err(|e| SessError::UnsupportedModel(format!("{}: {e:#}", path.display())))?;

    let inputs = model.input_outlets().map_err(unsupported)?.len();
    if inputs != 1 {
        return Err(SessError::UnsupportedModel(format!(
            "expected exactly one image input, graph has {inputs}"
        )));
    }
    let outputs = model.output_outlets().map_err(unsupported)?.len();
    if outputs != 1 {
        return Err(SessError::UnsupportedModel(format!(
            "expected exactly one score output, graph has {outputs}"
        )));
    }

    let declared = concrete_dims(model.input_fact(0).map_err(unsupported)?);
    if !declared.is_empty() {
        if declared.len() != 4 {
            return Err(SessError::UnsupportedModel(format!(
                "image input must be rank 4 (B,3,H,W), graph declares rank {}",
                declared.len()
            )));
        }
        if let Some(c) = declared[1] {
            if c != 3 {
                return Err(SessError::UnsupportedModel(format!(
                    "image input must have 3 channels, graph declares {c}"
                )));
            }
        }
        for side in [declared[2], declared[3]].into_iter().flatten() {
            if side as usize != meta.input_size {
                return Err(SessError::UnsupportedModel(format!(
                    "graph input side {side} disagrees with sidecar input_size {}",
                    meta.input_size
                )));
            }
        }
    }

    let batch = model.sym("N");
    let side = meta.input_size as i64;
    let fact = f32::fact(&[batch.to_dim(), 3.to_dim(), side.to_dim(), side.to_dim()]);
    let plan = model
        .with_input_fact(0, fact.into())
        .and_then(|m| m.into_optimized())
        .and_then(|m| m.into_runnable())
        .map_err(|e| SessError::UnsupportedModel(format!("{e:#}")))?;

    let mut backend = OnnxBackend {
        plan,
        meta,
        num_classes: 0,
        mode: ScoreMode::Softmax,
        name: path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
    };
    // The output width is not always static; one probe pass settles it.
    let probe = RasterImage::filled(backend.meta.input_size, backend.meta.input_size, [0.5; 3])?;
    let (_, cols, _) = backend.run_raw(&[probe])?;
    if cols == 0 {
        return Err(SessError::UnsupportedModel("graph emits no classes".into()));
    }
    if !backend.meta.labels.is_empty() && backend.meta.labels.len() != cols {
        return Err(SessError::Metadata(format!(
            "sidecar lists {} labels but the graph emits {cols} classes",
            backend.meta.labels.len()
        )));
    }
    backend.num_classes = cols;
    Ok(backend)
}

impl OnnxBackend {
    pub fn with_mode(mut self, mode: ScoreMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn meta(&self) -> &ModelMeta {
        &self.meta
    }

    fn run_raw(&self, batch: &[RasterImage]) -> Result<(usize, usize, Vec<f32>)> {
        let side = self.meta.input_size;
        let (mean, std) = (self.meta.mean, self.meta.std);
        let input = tract_ndarray::Array4::from_shape_fn(
            (batch.len(), 3, side, side),
            |(n, c, y, x)| (batch[n].pixel(y, x)[c] - mean[c]) / std[c],
        );
        let out = self
            .plan
            .run(tvec!(input.into_tensor().into()))
            .map_err(|e| SessError::Inference(format!("{e:#}")))?;
        let view = out[0]
            .to_array_view::<f32>()
            .map_err(|e| SessError::Inference(format!("{e:#}")))?;
        let shape = view.shape().to_vec();
        if shape.first() != Some(&batch.len()) {
            return Err(SessError::Inference(format!(
                "output shape {shape:?} does not lead with the batch size {}",
                batch.len()
            )));
        }
        let cols: usize = shape[1..].iter().product();
        Ok((batch.len(), cols, view.iter().copied().collect()))
    }
}

impl ClassifierBackend for OnnxBackend {
    fn input_size(&self) -> usize {
        self.meta.input_size
    }

    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn score_mode(&self) -> ScoreMode {
        self.mode
    }

    fn labels(&self) -> &[String] {
        &self.meta.labels
    }

    fn describe(&self) -> String {
        format!("onnx:{}", self.name)
    }

    fn infer(&self, batch: &[RasterImage]) -> Result<ScoreMatrix> {
        let (rows, cols, raw) = self.run_raw(batch)?;
        if cols != self.num_classes {
            return Err(SessError::Inference(format!(
                "graph emitted {cols} classes, expected {}",
                self.num_classes
            )));
        }
        let data = match (self.mode, self.meta.emits_logits) {
            (ScoreMode::Softmax, true) => raw.chunks_exact(cols).flat_map(softmax).collect(),
            (ScoreMode::Logit, false) => raw.iter().map(|p| p.max(f32::MIN_POSITIVE).ln()).collect(),
            _ => raw,
        };
        ScoreMatrix::new(rows, cols, data)
    }
}
