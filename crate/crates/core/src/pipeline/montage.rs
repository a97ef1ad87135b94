use std::collections::BTreeMap;

use image::RgbImage;

use crate::error::{Result, SessError};
use crate::imgproc::{bilinear_resize, RasterImage};
use crate::pipeline::{CalibratedStack, PatchSpec};
use crate::render::{colorize, draw_rect, fit_long_side, RED};

/// Longer side of one montage tile.
pub const TILE_LONG_SIDE: usize = 128;
pub const GUTTER: usize = 6;

/// Placement of every tile in a patch montage.
#[derive(Debug, Clone, PartialEq)]
pub struct MontageLayout {
    /// `(height, width)` of every tile.
    pub tile: (usize, usize),
    pub gutter: usize,
    pub rows: usize,
    pub cols: usize,
    /// Scale index shown in each row.
    pub row_scales: Vec<usize>,
    /// `(row, col)` of each layer, in stack order.
    pub cells: Vec<(usize, usize)>,
}

impl MontageLayout {
    /// One row per distinct scale (ascending), patches left to right in
    /// enumeration order.
    pub fn new(specs: &[PatchSpec], original_dims: (usize, usize)) -> Self {
        let mut by_scale: BTreeMap<usize, usize> = BTreeMap::new();
        for s in specs {
            *by_scale.entry(s.scale_index).or_default() += 1;
        }
        let row_scales: Vec<usize> = by_scale.keys().copied().collect();
        let cols = by_scale.values().copied().max().unwrap_or(0);
        let mut next_col: BTreeMap<usize, usize> = BTreeMap::new();
        let cells = specs
            .iter()
            .map(|s| {
                let row = row_scales.iter().position(|&r| r == s.scale_index).unwrap();
                let col = next_col.entry(s.scale_index).or_default();
                let cell = (row, *col);
                *col += 1;
                cell
            })
            .collect();
        MontageLayout {
            tile: fit_long_side(original_dims, TILE_LONG_SIDE),
            gutter: GUTTER,
            rows: row_scales.len(),
            cols,
            row_scales,
            cells,
        }
    }

    /// `(height, width)` of the whole montage.
    pub fn dims(&self) -> (usize, usize) {
        (
            self.rows * (self.tile.0 + self.gutter),
            self.cols * (self.tile.1 + self.gutter),
        )
    }

    /// Top-left pixel `(x, y)` of a cell.
    pub fn cell_origin(&self, (row, col): (usize, usize)) -> (usize, usize) {
        (
            col * (self.tile.1 + self.gutter) + self.gutter / 2,
            row * (self.tile.0 + self.gutter) + self.gutter / 2,
        )
    }
}

/// Inclusive tile-pixel rectangle `(x0, y0, x1, y1)` covering the patch
/// footprint.
pub fn tile_outline(
    spec: &PatchSpec,
    original_dims: (usize, usize),
    tile: (usize, usize),
) -> (usize, usize, usize, usize) {
    let [fx0, fy0, fx1, fy1] = spec.footprint(original_dims);
    let sx = tile.1 as f64 / original_dims.1 as f64;
    let sy = tile.0 as f64 / original_dims.0 as f64;
    let clamp = |v: f64, hi: usize| (v.max(0.0) as usize).min(hi - 1);
    (
        clamp((fx0 * sx).floor(), tile.1),
        clamp((fy0 * sy).floor(), tile.0),
        clamp((fx1 * sx).ceil() - 1.0, tile.1),
        clamp((fy1 * sy).ceil() - 1.0, tile.0),
    )
}

/// Tiles every calibrated layer (color-mapped) with its source footprint
/// outlined in red, one row per scale.
pub fn dump_patch_grid(stack: &CalibratedStack, specs: &[PatchSpec]) -> Result<RasterImage> {
    if stack.is_empty() {
        return Err(SessError::invalid("no patch maps to lay out"));
    }
    if stack.len() != specs.len() {
        return Err(SessError::invalid(format!(
            "{} layers but {} patch specs",
            stack.len(),
            specs.len()
        )));
    }
    let dims = stack.dims();
    let layout = MontageLayout::new(specs, dims);
    let (mh, mw) = layout.dims();
    let mut canvas = RgbImage::from_pixel(mw as u32, mh as u32, image::Rgb([255, 255, 255]));
    for ((layer, spec), &cell) in stack.layers().iter().zip(specs).zip(&layout.cells) {
        let small = bilinear_resize(&layer.to_dense(), layout.tile.0, layout.tile.1)?;
        let mut tile = colorize(&small);
        let (x0, y0, x1, y1) = tile_outline(spec, dims, layout.tile);
        draw_rect(&mut tile, x0 as i64, y0 as i64, x1 as i64, y1 as i64, RED);
        let (ox, oy) = layout.cell_origin(cell);
        image::imageops::replace(&mut canvas, &tile, ox as i64, oy as i64);
    }
    RasterImage::from_rgb8(&canvas)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::ScoreMode;
    use crate::imgproc::GrayMap;
    use crate::pipeline::{calibrate_layer, enumerate_patches};

    fn stack_for(specs: &[PatchSpec], dims: (usize, usize)) -> CalibratedStack {
        let mut stack = CalibratedStack::new(dims, ScoreMode::Softmax);
        let map = GrayMap::from_fn(224, 224, |y, x| (x + y) as f32 / 446.0).unwrap();
        for s in specs {
            stack.push(calibrate_layer(&map, s, dims).unwrap(), 1.0).unwrap();
        }
        stack
    }

    #[test]
    fn single_tile() {
        let specs = enumerate_patches((224, 224), 1, (224, 224), 224).unwrap();
        let m = dump_patch_grid(&stack_for(&specs, (224, 224)), &specs).unwrap();
        assert_eq!(m.dims(), (128 + GUTTER, 128 + GUTTER));
    }

    #[test]
    fn rows_follow_scales() {
        let dims = (300, 300);
        let specs = enumerate_patches(dims, 5, (224, 224), 224).unwrap();
        let layout = MontageLayout::new(&specs, dims);
        assert_eq!(layout.rows, 5);
        assert_eq!(layout.row_scales, vec![1, 2, 3, 4, 5]);
        // Per-axis origin counts 1, 2, 2, 2, 3.
        assert_eq!(layout.cols, 9);
        let per_row: Vec<usize> = (0..5)
            .map(|r| layout.cells.iter().filter(|c| c.0 == r).count())
            .collect();
        assert_eq!(per_row, vec![1, 4, 4, 4, 9]);
        let m = dump_patch_grid(&stack_for(&specs, dims), &specs).unwrap();
        assert_eq!(m.dims(), (5 * (128 + GUTTER), 9 * (128 + GUTTER)));
    }

    #[test]
    fn outline_drawn_at_footprint() {
        let dims = (300, 450);
        let specs = enumerate_patches(dims, 2, (224, 224), 224).unwrap();
        let layout = MontageLayout::new(&specs, dims);
        let m = dump_patch_grid(&stack_for(&specs, dims), &specs).unwrap();
        for (spec, &cell) in specs.iter().zip(&layout.cells) {
            let (x0, y0, x1, y1) = tile_outline(spec, dims, layout.tile);
            let (ox, oy) = layout.cell_origin(cell);
            for (x, y) in [(x0, y0), (x1, y1), (x0, y1), (x1, y0)] {
                let px = m.pixel(oy + y, ox + x);
                let red: [f32; 3] = std::array::from_fn(|c| RED[c] as f32 / 255.0);
                assert_eq!(px, red, "{spec:?}");
            }
        }
    }

    #[test]
    fn mismatched_inputs() {
        let specs = enumerate_patches((224, 224), 1, (224, 224), 224).unwrap();
        let empty = CalibratedStack::new((224, 224), ScoreMode::Softmax);
        assert!(dump_patch_grid(&empty, &specs).is_err());
        let two = enumerate_patches((224, 224), 2, (224, 224), 224).unwrap();
        assert!(dump_patch_grid(&stack_for(&specs, (224, 224)), &two).is_err());
    }
}
