use serde::{Deserialize, Serialize};

use crate::backend::{check_class, forward_scores, ClassifierBackend, DEFAULT_MAX_BATCH};
use crate::error::{Result, SessError};
use crate::imgproc::{GrayMap, RasterImage};
use crate::pipeline::window_origins;
use crate::saliency::BaseSaliencyMethod;

/// Sliding square occluder settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OcclusionConfig {
    /// Side of the square occluder in pixels.
    pub occluder: usize,
    pub stride: usize,
    /// Pixel value written under the occluder, in `[0, 1]`.
    pub fill: f32,
    pub max_batch: usize,
}

impl Default for OcclusionConfig {
    fn default() -> Self {
        OcclusionConfig {
            occluder: 32,
            stride: 16,
            fill: 0.0,
            max_batch: DEFAULT_MAX_BATCH,
        }
    }
}

impl OcclusionConfig {
    pub fn validate(&self, side: usize) -> Result<()> {
        if self.occluder == 0 || self.occluder > side {
            return Err(SessError::invalid(format!(
                "occluder must lie in [1, {side}], got {}",
                self.occluder
            )));
        }
        if self.stride == 0 || self.stride > self.occluder {
            return Err(SessError::invalid(format!(
                "occlusion stride must lie in [1, {}], got {}",
                self.occluder, self.stride
            )));
        }
        if !(0.0..=1.0).contains(&self.fill) {
            return Err(SessError::invalid(format!(
                "occluder fill must lie in [0, 1], got {}",
                self.fill
            )));
        }
        Ok(())
    }
}

/// Top-left corners `(y, x)` of every occluder placement, row-major.
fn placements(h: usize, w: usize, cfg: &OcclusionConfig) -> Result<Vec<(usize, usize)>> {
    let ys = window_origins(h, cfg.occluder, cfg.stride)?;
    let xs = window_origins(w, cfg.occluder, cfg.stride)?;
    Ok(ys
        .iter()
        .flat_map(|&y| xs.iter().map(move |&x| (y, x)))
        .collect())
}

fn occlude(patch: &RasterImage, (y0, x0): (usize, usize), cfg: &OcclusionConfig) -> RasterImage {
    let mut out = patch.clone();
    for y in y0..y0 + cfg.occluder {
        for x in x0..x0 + cfg.occluder {
            out.set_pixel(y, x, [cfg.fill; 3]);
        }
    }
    out
}

/// Score drop of `class` under each occluder placement, spread over the
/// covered pixels and averaged by coverage count. Negative drops count as 0.
pub fn occlusion_saliency(
    patch: &RasterImage,
    class: usize,
    backend: &dyn ClassifierBackend,
    cfg: &OcclusionConfig,
) -> Result<GrayMap> {
    let (h, w) = patch.dims();
    cfg.validate(h.min(w))?;
    check_class(backend, class)?;
    let baseline = forward_scores(backend, std::slice::from_ref(patch))?.get(0, class);

    let spots = placements(h, w, cfg)?;
    let mut sum = vec![0.0f64; h * w];
    let mut coverage = vec![0u32; h * w];
    let chunk = cfg.max_batch.max(1);
    for (c, group) in spots.chunks(chunk).enumerate() {
        let batch: Vec<RasterImage> = group.iter().map(|&p| occlude(patch, p, cfg)).collect();
        let scores = forward_scores(backend, &batch).map_err(|e| {
            SessError::Inference(format!("occlusion placement {}: {e}", c * chunk))
        })?;
        for (k, &(y0, x0)) in group.iter().enumerate() {
            let drop = (baseline - scores.get(k, class)).max(0.0) as f64;
            for y in y0..y0 + cfg.occluder {
                for x in x0..x0 + cfg.occluder {
                    sum[y * w + x] += drop;
                    coverage[y * w + x] += 1;
                }
            }
        }
    }
    let data = sum
        .iter()
        .zip(&coverage)
        .map(|(&s, &n)| if n == 0 { 0.0 } else { (s / n as f64) as f32 })
        .collect();
    GrayMap::new(h, w, data)
}

#[derive(Debug, Clone)]
pub struct Occlusion {
    cfg: OcclusionConfig,
}

impl Occlusion {
    pub fn new(cfg: OcclusionConfig) -> Result<Self> {
        cfg.validate(usize::MAX)?;
        Ok(Occlusion { cfg })
    }
}

impl BaseSaliencyMethod for Occlusion {
    fn name(&self) -> &str {
        "occlusion"
    }

    fn query_budget(&self) -> usize {
        // Budget for the standard 224 patch; exact count depends on patch size.
        placements(224, 224, &self.cfg).map(|p| p.len() + 1).unwrap_or(1)
    }

    fn extract(
        &self,
        patch: &RasterImage,
        class: usize,
        backend: &dyn ClassifierBackend,
        _patch_index: usize,
    ) -> Result<GrayMap> {
        occlusion_saliency(patch, class, backend, &self.cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::make_quadrant_mock;

    fn bright_top_left() -> RasterImage {
        RasterImage::from_fn(224, 224, |y, x| if y < 112 && x < 112 { [1.0; 3] } else { [0.1; 3] })
            .unwrap()
    }

    fn region_mean(m: &GrayMap, ys: std::ops::Range<usize>, xs: std::ops::Range<usize>) -> f64 {
        let n = ys.len() * xs.len();
        let mut s = 0.0;
        for y in ys {
            for x in xs.clone() {
                s += m.get(y, x) as f64;
            }
        }
        s / n as f64
    }

    #[test]
    fn occluding_evidence_hurts_most() {
        let mock = make_quadrant_mock(4);
        let m = occlusion_saliency(&bright_top_left(), 0, &mock, &OcclusionConfig::default())
            .unwrap();
        assert_eq!(m.dims(), (224, 224));
        let tl = region_mean(&m, 0..96, 0..96);
        let br = region_mean(&m, 128..224, 128..224);
        assert!(tl > br, "{tl} vs {br}");
        assert!(tl > 0.0);
        // Occluding other quadrants only raises class 0, so those drops clamp to zero.
        assert_eq!(br, 0.0);
    }

    #[test]
    fn uniform_patch_matching_fill_gives_constant_map() {
        let mock = make_quadrant_mock(4);
        let cfg = OcclusionConfig {
            fill: 0.4,
            ..Default::default()
        };
        let flat = RasterImage::filled(224, 224, [0.4; 3]).unwrap();
        let m = occlusion_saliency(&flat, 2, &mock, &cfg).unwrap();
        assert!(m.data().iter().all(|&v| v == m.data()[0]));
    }

    #[test]
    fn single_placement() {
        let mock = make_quadrant_mock(4);
        let cfg = OcclusionConfig {
            occluder: 224,
            stride: 224,
            ..Default::default()
        };
        let patch = bright_top_left();
        let m = occlusion_saliency(&patch, 0, &mock, &cfg).unwrap();
        let s0 = forward_scores(&mock, &[patch]).unwrap().get(0, 0);
        let black = RasterImage::filled(224, 224, [0.0; 3]).unwrap();
        let s1 = forward_scores(&mock, &[black]).unwrap().get(0, 0);
        let expect = (s0 - s1).max(0.0);
        assert!(m.data().iter().all(|&v| (v - expect).abs() < 1e-7));
    }

    #[test]
    fn non_overlapping_coverage() {
        let cfg = OcclusionConfig {
            occluder: 50,
            stride: 50,
            ..Default::default()
        };
        let spots = placements(224, 224, &cfg).unwrap();
        let mut cov = vec![0u32; 224 * 224];
        for (y0, x0) in spots {
            for y in y0..y0 + 50 {
                for x in x0..x0 + 50 {
                    cov[y * 224 + x] += 1;
                }
            }
        }
        // The clamped last placement starts at 174 and overlaps [174, 200).
        let band = |v: usize| (174..200).contains(&v);
        for y in 0..224 {
            for x in 0..224 {
                let c = cov[y * 224 + x];
                if !band(y) && !band(x) {
                    assert_eq!(c, 1);
                } else {
                    assert!(c >= 1);
                }
            }
        }
    }

    #[test]
    fn bad_config_rejected() {
        let mock = make_quadrant_mock(4);
        let patch = bright_top_left();
        for cfg in [
            OcclusionConfig { occluder: 0, ..Default::default() },
            OcclusionConfig { occluder: 300, ..Default::default() },
            OcclusionConfig { stride: 40, ..Default::default() },
            OcclusionConfig { fill: 2.0, ..Default::default() },
        ] {
            assert!(occlusion_saliency(&patch, 0, &mock, &cfg).is_err());
        }
        assert!(occlusion_saliency(&patch, 7, &mock, &OcclusionConfig::default()).is_err());
    }
}
