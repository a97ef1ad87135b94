use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backend::{check_class, forward_scores, ClassifierBackend, DEFAULT_MAX_BATCH};
use crate::error::{Result, SessError};
use crate::imgproc::{bilinear_resize, GrayMap, RasterImage};
use crate::saliency::BaseSaliencyMethod;

/// Randomized input sampling settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RiseConfig {
    pub num_masks: usize,
    /// Cells per side of the coarse random grid.
    pub grid: usize,
    /// Probability that a grid cell is kept.
    pub keep_prob: f64,
    pub rng_seed: u64,
    pub max_batch: usize,
}

impl Default for RiseConfig {
    fn default() -> Self {
        RiseConfig {
            num_masks: 500,
            grid: 7,
            keep_prob: 0.5,
            rng_seed: 0,
            max_batch: DEFAULT_MAX_BATCH,
        }
    }
}

impl RiseConfig {
    pub fn validate(&self, side: usize) -> Result<()> {
        if self.num_masks == 0 {
            return Err(SessError::invalid("RISE needs at least one mask"));
        }
        if self.grid == 0 || self.grid > side {
            return Err(SessError::invalid(format!(
                "RISE grid must lie in [1, {side}], got {}",
                self.grid
            )));
        }
        if !(self.keep_prob > 0.0 && self.keep_prob <= 1.0) {
            return Err(SessError::invalid(format!(
                "RISE keep probability must lie in (0, 1], got {}",
                self.keep_prob
            )));
        }
        Ok(())
    }
}

/// Draws smooth random masks: a binary `grid x grid` pattern upsampled to
/// `(grid + 1) * cell` and cropped at a random sub-cell shift.
struct MaskStream {
    rng: ChaCha8Rng,
    side: usize,
    grid: usize,
    keep_prob: f64,
}

impl MaskStream {
    fn new(side: usize, cfg: &RiseConfig, patch_index: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
        rng.set_stream(patch_index as u64);
        MaskStream {
            rng,
            side,
            grid: cfg.grid,
            keep_prob: cfg.keep_prob,
        }
    }

    fn next_mask(&mut self) -> GrayMap {
        let s = self.grid;
        let cell = self.side.div_ceil(s);
        let up = (s + 1) * cell;
        let cells: Vec<f32> = (0..s * s)
            .map(|_| f32::from(u8::from(self.rng.random::<f64>() < self.keep_prob)))
            .collect();
        let dy = self.rng.random_range(0..cell);
        let dx = self.rng.random_range(0..cell);
        let coarse = GrayMap::new(s, s, cells).expect("grid is nonempty");
        let fine = bilinear_resize(&coarse, up, up).expect("upsampled size is nonzero");
        GrayMap::from_fn(self.side, self.side, |y, x| fine.get(y + dy, x + dx))
            .expect("side is nonzero")
    }
}

/// The masks [`rise_saliency`] would draw for `patch_index`.
pub fn rise_masks(side: usize, cfg: &RiseConfig, patch_index: usize) -> Result<Vec<GrayMap>> {
    cfg.validate(side)?;
    let mut stream = MaskStream::new(side, cfg, patch_index);
    Ok((0..cfg.num_masks).map(|_| stream.next_mask()).collect())
}

fn accumulate(
    patch: &RasterImage,
    class: usize,
    backend: &dyn ClassifierBackend,
    masks: &[GrayMap],
    sum: &mut [f64],
) -> Result<()> {
    let batch = masks
        .iter()
        .map(|m| patch.masked(m))
        .collect::<Result<Vec<_>>>()?;
    let scores = forward_scores(backend, &batch)?;
    for (k, mask) in masks.iter().enumerate() {
        let s = scores.get(k, class) as f64;
        for (acc, &m) in sum.iter_mut().zip(mask.data()) {
            *acc += s * m as f64;
        }
    }
    Ok(())
}

fn finish(h: usize, w: usize, sum: Vec<f64>, n: usize, keep_prob: f64) -> Result<GrayMap> {
    let norm = n as f64 * keep_prob;
    GrayMap::new(h, w, sum.into_iter().map(|v| (v / norm) as f32).collect())
}

/// Saliency as the score-weighted mean of explicitly supplied masks,
/// `sum_k score_k * mask_k / (N * keep_prob)`.
pub fn rise_saliency_with_masks(
    patch: &RasterImage,
    class: usize,
    backend: &dyn ClassifierBackend,
    masks: &[GrayMap],
    keep_prob: f64,
    max_batch: usize,
) -> Result<GrayMap> {
    if masks.is_empty() {
        return Err(SessError::invalid("RISE needs at least one mask"));
    }
    check_class(backend, class)?;
    let (h, w) = patch.dims();
    let mut sum = vec![0.0f64; h * w];
    for chunk in masks.chunks(max_batch.max(1)) {
        accumulate(patch, class, backend, chunk, &mut sum)?;
    }
    finish(h, w, sum, masks.len(), keep_prob)
}

/// Randomized input sampling saliency. Deterministic for a given
/// `(cfg.rng_seed, patch_index)` pair.
pub fn rise_saliency(
    patch: &RasterImage,
    class: usize,
    backend: &dyn ClassifierBackend,
    cfg: &RiseConfig,
    patch_index: usize,
) -> Result<GrayMap> {
    let (h, w) = patch.dims();
    if h != w {
        return Err(SessError::DimensionMismatch {
            expected: (h, h),
            got: (h, w),
        });
    }
    cfg.validate(h)?;
    check_class(backend, class)?;
    let mut stream = MaskStream::new(h, cfg, patch_index);
    let mut sum = vec![0.0f64; h * w];
    let chunk = cfg.max_batch.max(1);
    let mut remaining = cfg.num_masks;
    while remaining > 0 {
        let take = remaining.min(chunk);
        let masks: Vec<GrayMap> = (0..take).map(|_| stream.next_mask()).collect();
        accumulate(patch, class, backend, &masks, &mut sum)?;
        remaining -= take;
    }
    finish(h, w, sum, cfg.num_masks, cfg.keep_prob)
}

#[derive(Debug, Clone)]
pub struct Rise {
    cfg: RiseConfig,
}

impl Rise {
    pub fn new(cfg: RiseConfig) -> Result<Self> {
        cfg.validate(usize::MAX)?;
        Ok(Rise { cfg })
    }
}

impl BaseSaliencyMethod for Rise {
    fn name(&self) -> &str {
        "rise"
    }

    fn query_budget(&self) -> usize {
        self.cfg.num_masks
    }

    fn extract(
        &self,
        patch: &RasterImage,
        class: usize,
        backend: &dyn ClassifierBackend,
        patch_index: usize,
    ) -> Result<GrayMap> {
        rise_saliency(patch, class, backend, &self.cfg, patch_index)
    }
}
