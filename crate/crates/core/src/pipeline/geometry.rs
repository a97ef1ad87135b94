use serde::{Deserialize, Serialize};

use crate::error::{Result, SessError};
use crate::imgproc::shorter_side_dims;

/// Base side of the smallest scale and the window size of standard
/// ImageNet-style classifiers.
pub const BASE_SIZE: usize = 224;
/// Growth of the shorter side between consecutive scales.
pub const SCALE_INCREMENT: usize = 64;

/// Provenance of one sliding-window patch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PatchSpec {
    /// 1-based index into the scale list.
    pub scale_index: usize,
    /// `(height, width)` of the rescaled image the patch was cut from.
    pub scaled_dims: (usize, usize),
    /// `(x, y)` of the top-left corner in scaled coordinates.
    pub origin: (usize, usize),
    /// `(width, height)` of the window.
    pub size: (usize, usize),
}

impl PatchSpec {
    pub fn check(&self) -> Result<()> {
        let (sh, sw) = self.scaled_dims;
        let (x, y) = self.origin;
        let (w, h) = self.size;
        if w == 0 || h == 0 || x + w > sw || y + h > sh {
            return Err(SessError::invalid(format!(
                "patch {w}x{h} at ({x}, {y}) does not fit scaled image {sw}x{sh}"
            )));
        }
        Ok(())
    }

    /// Footprint `[x0, y0, x1, y1)` mapped back to an image of `original_dims`
    /// `(height, width)`, in continuous pixel-edge coordinates.
    pub fn footprint(&self, original_dims: (usize, usize)) -> [f64; 4] {
        let (oh, ow) = original_dims;
        let (sh, sw) = self.scaled_dims;
        let fx = ow as f64 / sw as f64;
        let fy = oh as f64 / sh as f64;
        let (x, y) = self.origin;
        let (w, h) = self.size;
        [
            x as f64 * fx,
            y as f64 * fy,
            (x + w) as f64 * fx,
            (y + h) as f64 * fy,
        ]
    }
}

/// Shorter-side targets `base + 64 (i - 1)` for `i = 1..=n`.
pub fn scale_sizes_from(base: usize, n: usize) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(SessError::invalid("number of scales must be at least 1"));
    }
    Ok((0..n).map(|i| base + SCALE_INCREMENT * i).collect())
}

pub fn scale_sizes(n: usize) -> Result<Vec<usize>> {
    scale_sizes_from(BASE_SIZE, n)
}

/// Window start positions along one axis: a regular grid at `step`, plus a
/// final window clamped to the far edge when the grid does not reach it.
pub fn window_origins(length: usize, win: usize, step: usize) -> Result<Vec<usize>> {
    if win == 0 || step == 0 {
        return Err(SessError::invalid("window and step must be positive"));
    }
    if length < win {
        return Err(SessError::invalid(format!(
            "axis length {length} is shorter than the window {win}"
        )));
    }
    let last = length - win;
    let mut out: Vec<usize> = (0..=last).step_by(step).collect();
    if out.last() != Some(&last) {
        out.push(last);
    }
    Ok(out)
}

/// All windows over every scale, ordered by scale and then row-major.
pub fn enumerate_patches(
    image_dims: (usize, usize),
    n_scales: usize,
    window: (usize, usize),
    step: usize,
) -> Result<Vec<PatchSpec>> {
    let (win_w, win_h) = window;
    let base = win_w.max(win_h);
    let mut specs = Vec::new();
    for (i, target) in scale_sizes_from(base, n_scales)?.into_iter().enumerate() {
        let (sh, sw) = shorter_side_dims(image_dims.0, image_dims.1, target)?;
        let ys = window_origins(sh, win_h, step)?;
        let xs = window_origins(sw, win_w, step)?;
        for &y in &ys {
            for &x in &xs {
                specs.push(PatchSpec {
                    scale_index: i + 1,
                    scaled_dims: (sh, sw),
                    origin: (x, y),
                    size: (win_w, win_h),
                });
            }
        }
    }
    Ok(specs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn scale_size_examples() {
        assert_eq!(scale_sizes(1).unwrap(), vec![224]);
        assert_eq!(scale_sizes(3).unwrap(), vec![224, 288, 352]);
        let twelve = scale_sizes(12).unwrap();
        assert_eq!(*twelve.last().unwrap(), 928);
        assert!((928.0f64 / 224.0 - 4.14).abs() < 0.01);
        assert!(twelve.windows(2).all(|w| w[0] < w[1]));
        assert!(scale_sizes(0).is_err());
    }

    #[test]
    fn window_origin_examples() {
        assert_eq!(window_origins(224, 224, 224).unwrap(), vec![0]);
        assert_eq!(window_origins(480, 224, 224).unwrap(), vec![0, 224, 256]);
        assert_eq!(window_origins(448, 224, 224).unwrap(), vec![0, 224]);
        assert_eq!(window_origins(300, 224, 50).unwrap(), vec![0, 50, 76]);
        assert!(window_origins(200, 224, 224).is_err());
    }

    #[test]
    fn patch_count_examples() {
        let count = |n| enumerate_patches((500, 500), n, (224, 224), 224).unwrap().len();
        assert_eq!(count(1), 1);
        assert_eq!(count(2), 5);
        assert_eq!(count(12), 122);
    }

    #[test]
    fn enumeration_order() {
        let specs = enumerate_patches((300, 300), 2, (224, 224), 224).unwrap();
        let origins: Vec<_> = specs.iter().map(|s| (s.scale_index, s.origin)).collect();
        assert_eq!(
            origins,
            vec![(1, (0, 0)), (2, (0, 0)), (2, (64, 0)), (2, (0, 64)), (2, (64, 64))]
        );
    }

    #[test]
    fn small_images_are_upscaled() {
        let specs = enumerate_patches((50, 80), 1, (224, 224), 224).unwrap();
        assert_eq!(specs.len(), 2);
        assert_eq!(specs[0].scaled_dims, (224, 358));
        assert_eq!(specs[1].origin, (134, 0));
    }

    proptest! {
        #[test]
        fn origins_are_valid(len in 224usize..2000, step in 1usize..300) {
            let o = window_origins(len, 224, step).unwrap();
            prop_assert_eq!(o[0], 0);
            prop_assert_eq!(*o.last().unwrap(), len - 224);
            prop_assert!(o.windows(2).all(|w| w[0] < w[1]));
        }

        #[test]
        fn counts_monotone(h in 1usize..900, w in 1usize..900, n in 1usize..12, step in 16usize..300) {
            let c = |n, step| enumerate_patches((h, w), n, (224, 224), step).unwrap().len();
            prop_assert!(c(n, step) <= c(n + 1, step));
            prop_assert!(c(n, step) >= c(n, step + 17));
        }

        #[test]
        fn specs_fit(h in 1usize..900, w in 1usize..900, n in 1usize..6, step in 32usize..300) {
            for s in enumerate_patches((h, w), n, (224, 224), step).unwrap() {
                prop_assert!(s.check().is_ok());
            }
        }
    }
}
