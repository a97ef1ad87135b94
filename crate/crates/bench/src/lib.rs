//! Synthetic fixtures shared by the benchmarks.

use sess_core::imgproc::{GrayMap, RasterImage};
use sess_core::pipeline::CalibratedStack;
use sess_core::ScoreMode;

/// Deterministic textured image with a bright square at `(top, left)`.
pub fn textured_image(h: usize, w: usize, square: (usize, usize, usize)) -> RasterImage {
    let (top, left, side) = square;
    RasterImage::from_fn(h, w, |y, x| {
        if (top..top + side).contains(&y) && (left..left + side).contains(&x) {
            [1.0; 3]
        } else {
            let v = ((x * 13 + y * 7) % 64) as f32 / 255.0;
            [v, v * 0.5, 0.1]
        }
    })
    .expect("valid fixture")
}

/// `layers` dense maps with simple gradients and descending weights.
pub fn dense_stack(h: usize, w: usize, layers: usize) -> CalibratedStack {
    let mut stack = CalibratedStack::new((h, w), ScoreMode::Softmax);
    for k in 0..layers {
        let map = GrayMap::from_fn(h, w, |y, x| ((x + y * (k + 1)) % 97) as f32 / 96.0)
            .expect("valid fixture");
        stack
            .push_dense(&map, 1.0 / (k + 1) as f32)
            .expect("positive weight");
    }
    stack
}

pub fn ramp_map(h: usize, w: usize) -> GrayMap {
    GrayMap::from_fn(h, w, |y, x| (x + y) as f32 / (h + w) as f32).expect("valid fixture")
}
