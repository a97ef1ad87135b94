#![allow(dead_code)]

use std::ops::RangeInclusive;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sess_core::imgproc::RasterImage;
use sess_core::metrics::BBox;

/// A dark image with one bright square near a corner.
pub struct CornerScene {
    pub image: RasterImage,
    /// Quadrant class of the corner (0 TL, 1 TR, 2 BL, 3 BR).
    pub class: usize,
    /// Inclusive square footprint `[x0, y0, x1, y1]`.
    pub bbox: BBox,
}

pub fn corner_scene(
    (h, w): (usize, usize),
    corner: usize,
    (dy, dx): (usize, usize),
    side: usize,
) -> CornerScene {
    let top = if corner < 2 { dy } else { h - side - dy };
    let left = if corner % 2 == 0 { dx } else { w - side - dx };
    let image = RasterImage::from_fn(h, w, |y, x| {
        if (top..top + side).contains(&y) && (left..left + side).contains(&x) {
            [1.0; 3]
        } else {
            let v = 0.04 + 0.02 * (((x / 7) + (y / 5)) % 3) as f32;
            [v, v, v]
        }
    })
    .unwrap();
    CornerScene {
        image,
        class: corner,
        bbox: [
            left as f64,
            top as f64,
            (left + side - 1) as f64,
            (top + side - 1) as f64,
        ],
    }
}

/// `count` seeded scenes with random corners and per-axis edge offsets
/// drawn from `offsets`.
pub fn random_scenes(
    seed: u64,
    count: usize,
    dims: (usize, usize),
    side: usize,
    offsets: RangeInclusive<usize>,
) -> Vec<CornerScene> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let corner = rng.random_range(0..4);
            let dy = rng.random_range(offsets.clone());
            let dx = rng.random_range(offsets.clone());
            corner_scene(dims, corner, (dy, dx), side)
        })
        .collect()
}

pub fn inside(bbox: &BBox, (y, x): (usize, usize)) -> bool {
    let (x, y) = (x as f64, y as f64);
    bbox[0] <= x && x <= bbox[2] && bbox[1] <= y && y <= bbox[3]
}
