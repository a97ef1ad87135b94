use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use sess_core::backend::{forward_scores, load_model, ClassifierBackend, ModelMeta, QuadrantMock};
use sess_core::imgproc::{resize_image, RasterImage};
use sess_core::saliency::{BaseMethodConfig, ExternalAdapter, OcclusionConfig, RiseConfig};
use sess_core::{SessConfig, SessError};
use sha2::{Digest, Sha256};

pub const MOCK_QUADRANT: &str = "mock:quadrant";

#[derive(Debug, Clone, Args)]
pub struct ModelOpts {
    /// ONNX model path, or `mock:quadrant` for the built-in four-class mock.
    #[arg(long)]
    pub model: String,
    /// JSON sidecar; defaults to the model path with a `.json` extension.
    #[arg(long)]
    pub meta: Option<PathBuf>,
}

/// Model identity recorded in manifests and reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub spec: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<PathBuf>,
    pub sha256: String,
    pub description: String,
}

pub struct LoadedModel {
    pub backend: Box<dyn ClassifierBackend>,
    pub record: ModelRecord,
}

fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

pub fn load_backend(spec: &str, meta: Option<&Path>) -> anyhow::Result<LoadedModel> {
    if spec == MOCK_QUADRANT {
        let backend = QuadrantMock::new(224);
        return Ok(LoadedModel {
            record: ModelRecord {
                spec: spec.to_owned(),
                meta: None,
                sha256: sha256_hex(spec.as_bytes()),
                description: backend.describe(),
            },
            backend: Box::new(backend),
        });
    }
    if let Some(kind) = spec.strip_prefix("mock:") {
        return Err(SessError::UnsupportedModel(format!("unknown mock model `{kind}`")).into());
    }
    let path = PathBuf::from(spec);
    let meta_path = meta.map(Path::to_path_buf).unwrap_or_else(|| path.with_extension("json"));
    let bytes = std::fs::read(&path).map_err(|e| SessError::io(&path, e))?;
    let meta = ModelMeta::load(&meta_path).context("loading model sidecar")?;
    let backend = load_model(&path, meta).context("loading model")?;
    Ok(LoadedModel {
        record: ModelRecord {
            spec: spec.to_owned(),
            meta: Some(meta_path),
            sha256: sha256_hex(&bytes),
            description: backend.describe(),
        },
        backend: Box::new(backend),
    })
}

impl ModelOpts {
    pub fn load(&self) -> anyhow::Result<LoadedModel> {
        load_backend(&self.model, self.meta.as_deref())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaseKind {
    Occlusion,
    Rise,
    External,
}

#[derive(Debug, Clone, Args)]
pub struct MethodOpts {
    /// Base saliency method applied to every patch.
    #[arg(long, value_enum, default_value = "occlusion")]
    pub base: BaseKind,
    /// Command line of the external adapter (with `--base external`).
    #[arg(long)]
    pub adapter: Option<String>,
    /// Occluder side in pixels.
    #[arg(long)]
    pub occluder: Option<usize>,
    /// Occluder stride in pixels.
    #[arg(long)]
    pub stride: Option<usize>,
    /// Number of random masks for RISE.
    #[arg(long)]
    pub masks: Option<usize>,
    /// RISE mask grid resolution.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Seed for randomized base methods.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct SessOpts {
    /// TOML or JSON file with pipeline settings; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of scales.
    #[arg(long)]
    pub scales: Option<usize>,
    /// Window side; must equal the model input size (default).
    #[arg(long)]
    pub window: Option<usize>,
    /// Sliding-window step (default: window side).
    #[arg(long)]
    pub step: Option<usize>,
    /// Percentage of lowest-scoring patches to drop, in [0, 100).
    #[arg(long)]
    pub prefilter: Option<f64>,
    /// Fusion threshold.
    #[arg(long)]
    pub theta: Option<f32>,
    /// Apply Gaussian smoothing to the fused map.
    #[arg(long, overrides_with = "no_smooth")]
    pub smooth: bool,
    /// Skip Gaussian smoothing.
    #[arg(long = "no-smooth", overrides_with = "smooth")]
    pub no_smooth: bool,
    /// Patches per inference call.
    #[arg(long)]
    pub batch: Option<usize>,
}

impl SessOpts {
    /// Merges preset, config file and flags. Window and step follow the
    /// model input size unless set explicitly.
    pub fn resolve(&self, preset: SessConfig, input_size: usize) -> anyhow::Result<SessConfig> {
        let mut cfg = match &self.config {
            Some(path) => SessConfig::load(path).context("loading pipeline config")?,
            None => {
                let mut cfg = preset;
                cfg.window_w = input_size;
                cfg.window_h = input_size;
                cfg.step = input_size;
                cfg
            }
        };
        if let Some(n) = self.scales {
            cfg.n_scales = n;
        }
        if let Some(w) = self.window {
            cfg.window_w = w;
            cfg.window_h = w;
            if self.step.is_none() {
                cfg.step = w;
            }
        }
        if let Some(s) = self.step {
            cfg.step = s;
        }
        if let Some(r) = self.prefilter {
            cfg.prefilter_ratio = r;
        }
        if let Some(t) = self.theta {
            cfg.theta = t;
        }
        if self.smooth {
            cfg.smoothing.enabled = true;
        }
        if self.no_smooth {
            cfg.smoothing.enabled = false;
        }
        if let Some(b) = self.batch {
            cfg.max_batch = b;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl MethodOpts {
    pub fn resolve(&self, max_batch: usize) -> anyhow::Result<BaseMethodConfig> {
        if self.adapter.is_some() && self.base != BaseKind::External {
            return Err(SessError::invalid("--adapter requires --base external").into());
        }
        Ok(match self.base {
            BaseKind::Occlusion => {
                let d = OcclusionConfig::default();
                BaseMethodConfig::Occlusion(OcclusionConfig {
                    occluder: self.occluder.unwrap_or(d.occluder),
                    stride: self.stride.unwrap_or(d.stride),
                    max_batch,
                    ..d
                })
            }
            BaseKind::Rise => {
                let d = RiseConfig::default();
                BaseMethodConfig::Rise(RiseConfig {
                    num_masks: self.masks.unwrap_or(d.num_masks),
                    grid: self.grid.unwrap_or(d.grid),
                    rng_seed: self.seed,
                    max_batch,
                    ..d
                })
            }
            BaseKind::External => {
                let cmd = self
                    .adapter
                    .as_deref()
                    .ok_or_else(|| SessError::invalid("--base external needs --adapter CMD"))?;
                BaseMethodConfig::External(ExternalAdapter::parse(cmd)?)
            }
        })
    }
}

pub fn load_image(path: &Path) -> anyhow::Result<RasterImage> {
    RasterImage::load(path).with_context(|| format!("reading image {}", path.display()))
}

/// Top-1 class of the whole image resized to the model input.
pub fn top1(backend: &dyn ClassifierBackend, image: &RasterImage) -> anyhow::Result<usize> {
    let s = backend.input_size();
    let small = resize_image(image, s, s)?;
    let scores = forward_scores(backend, std::slice::from_ref(&small)).context("scoring image")?;
    let row = scores.row(0);
    Ok((0..row.len())
        .max_by(|&a, &b| row[a].total_cmp(&row[b]).then(b.cmp(&a)))
        .unwrap_or(0))
}

pub fn ensure_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| SessError::io(dir, e))?;
    Ok(())
}

pub fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| SessError::Internal(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| SessError::io(path, e))?;
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).map_err(|e| SessError::io(path, e))?;
    Ok(())
}

pub fn save_rgb(path: &Path, img: &image::RgbImage) -> anyhow::Result<()> {
    img.save(path).map_err(SessError::from)?;
    Ok(())
}
