use serde::{Deserialize, Serialize};

use crate::backend::{check_class, forward_scores, softmax, ClassifierBackend, ScoreMode, DEFAULT_MAX_BATCH};
use crate::error::{Result, SessError};
use crate::imgproc::{bilinear_resize, gaussian_blur_image, resize_image, GrayMap, RasterImage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveKind {
    Insertion,
    Deletion,
}

/// What removed pixels become in the deletion test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeletionFill {
    #[default]
    Zero,
    /// Per-channel mean of the image.
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CurveConfig {
    /// Share of all pixels changed per step.
    pub step_frac: f64,
    /// Gaussian kernel of the insertion start image.
    pub blur_kernel: usize,
    pub blur_sigma: f64,
    pub fill: DeletionFill,
    pub max_batch: usize,
}

impl Default for CurveConfig {
    fn default() -> Self {
        CurveConfig {
            step_frac: 0.036,
            blur_kernel: 51,
            blur_sigma: 24.0,
            fill: DeletionFill::Zero,
            max_batch: DEFAULT_MAX_BATCH,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveResult {
    pub kind: CurveKind,
    /// Share of pixels changed at each checkpoint; starts at 0, ends at 1.
    pub fractions: Vec<f64>,
    /// Class probability at each checkpoint.
    pub scores: Vec<f64>,
    pub auc: f64,
}

/// Pixels changed per step: `floor(n * step_frac)`, at least one.
pub fn pixels_per_step(n_pixels: usize, step_frac: f64) -> Result<usize> {
    if !(step_frac > 0.0 && step_frac <= 1.0) {
        return Err(SessError::invalid(format!(
            "step fraction must lie in (0, 1], got {step_frac}"
        )));
    }
    Ok(((n_pixels as f64 * step_frac).floor() as usize).max(1))
}

/// Trapezoidal area under `(x, y)`.
pub fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| (x[1] - x[0]) * (y[0] + y[1]) / 2.0)
        .sum()
}

/// Pixel indices by descending saliency, ties in row-major order.
pub fn saliency_order(sal: &GrayMap) -> Vec<usize> {
    let d = sal.data();
    let mut idx: Vec<usize> = (0..d.len()).collect();
    idx.sort_by(|&a, &b| d[b].total_cmp(&d[a]));
    idx
}

/// Class probabilities for a batch, regardless of the backend's score mode.
pub fn class_probabilities(
    backend: &dyn ClassifierBackend,
    images: &[RasterImage],
    class: usize,
    max_batch: usize,
) -> Result<Vec<f64>> {
    check_class(backend, class)?;
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(max_batch.max(1)) {
        let scores = forward_scores(backend, chunk)?;
        for i in 0..scores.rows() {
            let p = match backend.score_mode() {
                ScoreMode::Softmax => scores.get(i, class),
                ScoreMode::Logit => softmax(scores.row(i))[class],
            };
            out.push(p as f64);
        }
    }
    Ok(out)
}

fn prepare(
    image: &RasterImage,
    sal: &GrayMap,
    backend: &dyn ClassifierBackend,
) -> Result<(RasterImage, GrayMap)> {
    if image.dims() != sal.dims() {
        return Err(SessError::DimensionMismatch {
            expected: image.dims(),
            got: sal.dims(),
        });
    }
    if !sal.is_finite() {
        return Err(SessError::invalid("saliency map contains non-finite values"));
    }
    let s = backend.input_size();
    if image.dims() == (s, s) {
        return Ok((image.clone(), sal.clone()));
    }
    Ok((resize_image(image, s, s)?, bilinear_resize(sal, s, s)?))
}

fn run_curve(
    kind: CurveKind,
    start: RasterImage,
    target: &RasterImage,
    sal: &GrayMap,
    backend: &dyn ClassifierBackend,
    class: usize,
    cfg: &CurveConfig,
) -> Result<CurveResult> {
    let (h, w) = target.dims();
    let n = h * w;
    let step = pixels_per_step(n, cfg.step_frac)?;
    let order = saliency_order(sal);
    let mut frames = Vec::with_capacity(n.div_ceil(step) + 1);
    let mut fractions = Vec::with_capacity(frames.capacity());
    let mut work = start;
    frames.push(work.clone());
    fractions.push(0.0);
    for chunk in order.chunks(step) {
        for &i in chunk {
            let (y, x) = (i / w, i % w);
            work.set_pixel(y, x, target.pixel(y, x));
        }
        frames.push(work.clone());
        fractions.push((fractions.len() * step).min(n) as f64 / n as f64);
    }
    let scores = class_probabilities(backend, &frames, class, cfg.max_batch)?;
    let auc = trapezoid(&fractions, &scores);
    Ok(CurveResult {
        kind,
        fractions,
        scores,
        auc,
    })
}

/// Removes pixels in descending saliency order and records the class
/// probability after every step. Image and map are first resized to the
/// model input size.
pub fn deletion_curve(
    image: &RasterImage,
    sal: &GrayMap,
    backend: &dyn ClassifierBackend,
    class: usize,
    cfg: &CurveConfig,
) -> Result<CurveResult> {
    let (image, sal) = prepare(image, sal, backend)?;
    let fill = match cfg.fill {
        DeletionFill::Zero => [0.0; 3],
        DeletionFill::Mean => channel_mean(&image),
    };
    let (h, w) = image.dims();
    let blank = RasterImage::filled(h, w, fill)?;
    run_curve(CurveKind::Deletion, image, &blank, &sal, backend, class, cfg)
}

/// Restores pixels of the original, in descending saliency order, onto a
/// heavily blurred copy.
pub fn insertion_curve(
    image: &RasterImage,
    sal: &GrayMap,
    backend: &dyn ClassifierBackend,
    class: usize,
    cfg: &CurveConfig,
) -> Result<CurveResult> {
    let (image, sal) = prepare(image, sal, backend)?;
    let blurred = gaussian_blur_image(&image, cfg.blur_kernel, cfg.blur_sigma)?;
    run_curve(CurveKind::Insertion, blurred, &image, &sal, backend, class, cfg)
}

/// `AUC(insertion) - AUC(deletion)`.
pub fn overall_score(ins: &CurveResult, del: &CurveResult) -> Result<f64> {
    if ins.kind != CurveKind::Insertion || del.kind != CurveKind::Deletion {
        return Err(SessError::invalid(format!(
            "overall score needs (insertion, deletion) curves, got ({:?}, {:?})",
            ins.kind, del.kind
        )));
    }
    Ok(ins.auc - del.auc)
}

fn channel_mean(img: &RasterImage) -> [f32; 3] {
    let mut acc = [0.0f64; 3];
    for px in img.data().chunks_exact(3) {
        for c in 0..3 {
            acc[c] += px[c] as f64;
        }
    }
    let n = (img.height() * img.width()) as f64;
    acc.map(|v| (v / n) as f32)
}
