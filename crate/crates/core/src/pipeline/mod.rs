//! Multi-scale sliding-window enhancement of a base saliency method.
//!
//! Stages: rescale the image to every scale, cut fixed-size windows, score
//! each window for the target class, keep the top-scoring share, explain the
//! kept windows with the base method, paste each explanation back into the
//! original frame, weight it by its window score, and take the per-pixel
//! mean over layers that exceed the threshold. Optional Gaussian smoothing
//! follows.
//!
//! Work on individual patches runs on the current rayon pool. Layers are
//! always reduced in enumeration order, so the result does not depend on
//! scheduling.

mod config;
mod fusion;
mod geometry;
mod montage;
mod prefilter;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::{check_class, forward_scores, ClassifierBackend};
use crate::error::{Result, SessError};
use crate::imgproc::{gaussian_blur, minmax_normalize, resize_shorter_side, GrayMap, RasterImage};
use crate::saliency::BaseSaliencyMethod;

pub use config::{SessConfig, SmoothingConfig, MAX_SCALES};
pub use fusion::{
    apply_channel_weights, calibrate, calibrate_layer, fuse, CalibratedLayer, CalibratedStack,
    FusionAccumulator,
};
pub use geometry::{
    enumerate_patches, scale_sizes, scale_sizes_from, window_origins, PatchSpec, BASE_SIZE,
    SCALE_INCREMENT,
};
pub use montage::{dump_patch_grid, tile_outline, MontageLayout, GUTTER, TILE_LONG_SIDE};
pub use prefilter::{keep_count, prefilter, prefilter_indices};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub millis: f64,
}

/// Everything a run produced, for inspection and manifests.
#[derive(Debug, Clone)]
pub struct SessRun {
    /// Final map at the original image size, values in `[0, 1]`.
    pub saliency: GrayMap,
    /// Fused map before smoothing.
    pub unsmoothed: GrayMap,
    /// All enumerated windows.
    pub specs: Vec<PatchSpec>,
    /// Target-class score of every window.
    pub scores: Vec<f32>,
    /// Indices into `specs` that survived pre-filtering, ascending.
    pub kept: Vec<usize>,
    /// Unweighted calibrated layers of the kept windows, when requested.
    pub stack: Option<CalibratedStack>,
    pub timings: Vec<StageTiming>,
}

impl SessRun {
    pub fn kept_specs(&self) -> Vec<PatchSpec> {
        self.kept.iter().map(|&i| self.specs[i]).collect()
    }
}

/// Extra knobs that do not change the result.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Keep the calibrated layers for montage rendering.
    pub keep_layers: bool,
}

struct Stopwatch {
    last: Instant,
    timings: Vec<StageTiming>,
}

impl Stopwatch {
    fn new() -> Self {
        Stopwatch {
            last: Instant::now(),
            timings: Vec::new(),
        }
    }

    fn lap(&mut self, stage: &'static str) {
        let now = Instant::now();
        self.timings.push(StageTiming {
            stage: stage.to_owned(),
            millis: (now - self.last).as_secs_f64() * 1e3,
        });
        self.last = now;
    }
}

fn with_patch(index: usize, spec: PatchSpec) -> impl Fn(SessError) -> SessError {
    move |e| SessError::Patch {
        index,
        spec,
        source: Box::new(e),
    }
}

/// Enhanced saliency map of `cfg.target_class` for `image`.
pub fn run_sess(
    image: &RasterImage,
    backend: &dyn ClassifierBackend,
    base: &dyn BaseSaliencyMethod,
    cfg: &SessConfig,
) -> Result<GrayMap> {
    Ok(run_sess_detailed(image, backend, base, cfg, RunOptions::default())?.saliency)
}

pub fn run_sess_detailed(
    image: &RasterImage,
    backend: &dyn ClassifierBackend,
    base: &dyn BaseSaliencyMethod,
    cfg: &SessConfig,
    opts: RunOptions,
) -> Result<SessRun> {
    cfg.validate()?;
    let side = backend.input_size();
    if cfg.window_w != side || cfg.window_h != side {
        return Err(SessError::invalid(format!(
            "window {}x{} must equal the model input size {side}",
            cfg.window_w, cfg.window_h
        )));
    }
    let class = cfg.target_class;
    check_class(backend, class)?;
    let dims = image.dims();
    let mut clock = Stopwatch::new();

    let sizes = scale_sizes_from(side, cfg.n_scales)?;
    let scaled: Vec<RasterImage> = sizes
        .par_iter()
        .map(|&s| resize_shorter_side(image, s))
        .collect::<Result<_>>()?;
    clock.lap("multi_scaling");

    let specs = enumerate_patches(dims, cfg.n_scales, (cfg.window_w, cfg.window_h), cfg.step)?;
    let patches: Vec<RasterImage> = specs
        .par_iter()
        .map(|s| {
            let src = &scaled[s.scale_index - 1];
            debug_assert_eq!(src.dims(), s.scaled_dims);
            src.crop(s.origin.1, s.origin.0, s.size.1, s.size.0)
        })
        .collect::<Result<_>>()?;
    clock.lap("sliding_window");

    let chunks: Vec<Vec<f32>> = patches
        .par_chunks(cfg.max_batch)
        .map(|chunk| Ok(forward_scores(backend, chunk)?.column(class)))
        .collect::<Result<_>>()?;
    let scores: Vec<f32> = chunks.into_iter().flatten().collect();
    clock.lap("scoring");

    let kept = prefilter_indices(&scores, cfg.prefilter_ratio)?;
    clock.lap("prefilter");

    let layers: Vec<CalibratedLayer> = kept
        .par_iter()
        .map(|&i| {
            let map = base
                .extract(&patches[i], class, backend, i)
                .map_err(with_patch(i, specs[i]))?;
            if map.dims() != (side, side) || !map.is_finite() {
                return Err(with_patch(i, specs[i])(SessError::Internal(format!(
                    "base method `{}` returned a {:?} map (finite: {})",
                    base.name(),
                    map.dims(),
                    map.is_finite()
                ))));
            }
            calibrate_layer(&minmax_normalize(&map), &specs[i], dims)
        })
        .collect::<Result<_>>()?;
    clock.lap("saliency_extraction");

    let mode = backend.score_mode();
    let mut acc = FusionAccumulator::new(dims, cfg.theta);
    let mut stack = opts.keep_layers.then(|| CalibratedStack::new(dims, mode));
    for (layer, &i) in layers.into_iter().zip(&kept) {
        let weight = scores[i];
        if mode == crate::backend::ScoreMode::Softmax && weight < 0.0 {
            return Err(SessError::Internal(format!(
                "patch {i} has negative probability {weight}"
            )));
        }
        acc.add(&layer, weight)?;
        if let Some(stack) = stack.as_mut() {
            stack.push(layer, weight)?;
        }
    }
    let unsmoothed = acc.finish();
    clock.lap("fusion");

    let saliency = if cfg.smoothing.enabled {
        gaussian_blur(&unsmoothed, cfg.smoothing.kernel, cfg.smoothing.sigma)?
    } else {
        unsmoothed.clone()
    };
    clock.lap("smoothing");

    Ok(SessRun {
        saliency,
        unsmoothed,
        specs,
        scores,
        kept,
        stack,
        timings: clock.timings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::make_quadrant_mock;
    use crate::imgproc::bilinear_resize;
    use crate::saliency::{Occlusion, OcclusionConfig};

    struct Fixed(GrayMap);

    impl BaseSaliencyMethod for Fixed {
        fn name(&self) -> &str {
            "fixed"
        }
        fn query_budget(&self) -> usize {
            0
        }
        fn extract(
            &self,
            _: &RasterImage,
            _: usize,
            _: &dyn ClassifierBackend,
            _: usize,
        ) -> Result<GrayMap> {
            Ok(self.0.clone())
        }
    }

    struct Failing;

    impl BaseSaliencyMethod for Failing {
        fn name(&self) -> &str {
            "failing"
        }
        fn query_budget(&self) -> usize {
            0
        }
        fn extract(
            &self,
            _: &RasterImage,
            _: usize,
            _: &dyn ClassifierBackend,
            i: usize,
        ) -> Result<GrayMap> {
            if i == 2 {
                Err(SessError::Inference("boom".into()))
            } else {
                Ok(GrayMap::filled(224, 224, 1.0)?)
            }
        }
    }

    fn single_scale() -> SessConfig {
        SessConfig {
            n_scales: 1,
            smoothing: SmoothingConfig {
                enabled: false,
                ..Default::default()
            },
            ..SessConfig::default()
        }
    }

    fn ramp() -> GrayMap {
        GrayMap::from_fn(224, 224, |y, x| 0.2 + (x * 3 + y) as f32 / 2000.0).unwrap()
    }

    #[test]
    fn identity_reduction_on_non_native_square() {
        let img = RasterImage::filled(300, 300, [0.5; 3]).unwrap();
        let mock = make_quadrant_mock(4);
        let out = run_sess(&img, &mock, &Fixed(ramp()), &single_scale()).unwrap();
        let expect = bilinear_resize(&minmax_normalize(&ramp()), 300, 300).unwrap();
        let expect = minmax_normalize(&expect);
        for (a, b) in out.data().iter().zip(expect.data()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn floor_of_one_patch() {
        let img = RasterImage::filled(400, 400, [0.5; 3]).unwrap();
        let mock = make_quadrant_mock(4);
        let cfg = SessConfig {
            n_scales: 2,
            prefilter_ratio: 99.9,
            ..single_scale()
        };
        let run = run_sess_detailed(&img, &mock, &Fixed(ramp()), &cfg, RunOptions::default())
            .unwrap();
        assert_eq!(run.specs.len(), 5);
        assert_eq!(run.kept.len(), 1);
    }

    #[test]
    fn errors_carry_patch_provenance() {
        let img = RasterImage::filled(300, 300, [0.5; 3]).unwrap();
        let mock = make_quadrant_mock(4);
        let cfg = SessConfig {
            n_scales: 2,
            ..single_scale()
        };
        match run_sess(&img, &mock, &Failing, &cfg) {
            Err(SessError::Patch { index, spec, source }) => {
                assert_eq!(index, 2);
                assert_eq!(spec.scale_index, 2);
                assert!(matches!(*source, SessError::Inference(_)));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn window_must_match_model() {
        let img = RasterImage::filled(300, 300, [0.5; 3]).unwrap();
        let mock = crate::backend::QuadrantMock::new(128);
        assert!(run_sess(&img, &mock, &Fixed(ramp()), &single_scale()).is_err());
        let cfg = SessConfig {
            target_class: 9,
            ..single_scale()
        };
        assert!(run_sess(&img, &make_quadrant_mock(4), &Fixed(ramp()), &cfg).is_err());
    }

    #[test]
    fn smaller_models_use_their_own_window() {
        let img = RasterImage::filled(100, 150, [0.5; 3]).unwrap();
        let mock = crate::backend::QuadrantMock::new(64);
        let cfg = SessConfig {
            n_scales: 2,
            window_w: 64,
            window_h: 64,
            step: 64,
            ..single_scale()
        };
        let base = Occlusion::new(OcclusionConfig {
            occluder: 16,
            stride: 8,
            ..Default::default()
        })
        .unwrap();
        let run = run_sess_detailed(&img, &mock, &base, &cfg, RunOptions { keep_layers: true })
            .unwrap();
        assert_eq!(run.saliency.dims(), (100, 150));
        assert_eq!(run.specs[0].scaled_dims, (64, 96));
        assert_eq!(run.stack.unwrap().len(), run.kept.len());
    }

    #[test]
    fn output_in_unit_range_with_smoothing() {
        let img = RasterImage::from_fn(260, 330, |y, x| {
            [((x * 7 + y * 3) % 256) as f32 / 255.0, 0.3, (y % 50) as f32 / 50.0]
        })
        .unwrap();
        let mock = make_quadrant_mock(4);
        let cfg = SessConfig {
            n_scales: 3,
            ..SessConfig::default()
        };
        let base = Occlusion::new(OcclusionConfig {
            occluder: 56,
            stride: 56,
            ..Default::default()
        })
        .unwrap();
        let run = run_sess_detailed(&img, &mock, &base, &cfg, RunOptions::default()).unwrap();
        assert_eq!(run.saliency.dims(), (260, 330));
        assert!(run.saliency.data().iter().all(|v| (0.0..=1.0).contains(v)));
        let stages: Vec<_> = run.timings.iter().map(|t| t.stage.as_str()).collect();
        assert_eq!(stages.len(), 7);
    }
}
