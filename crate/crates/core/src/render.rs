//! Color mapping and simple raster drawing for saliency views.

use image::{Rgb, RgbImage};

use crate::error::{Result, SessError};
use crate::imgproc::{resize_image, GrayMap, RasterImage};

/// Viridis control points at `i / 8`, `i = 0..=8`, linearly interpolated.
pub const VIRIDIS: [[u8; 3]; 9] = [
    [68, 1, 84],
    [71, 44, 122],
    [59, 81, 139],
    [44, 113, 142],
    [33, 144, 141],
    [39, 173, 129],
    [92, 200, 99],
    [170, 220, 50],
    [253, 231, 37],
];

pub const RED: [u8; 3] = [230, 25, 25];

/// Maps `v` (clamped to `[0, 1]`) onto the viridis ramp.
pub fn colormap(v: f32) -> [u8; 3] {
    let v = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
    let pos = v * (VIRIDIS.len() - 1) as f32;
    let i = (pos.floor() as usize).min(VIRIDIS.len() - 2);
    let t = pos - i as f32;
    let (a, b) = (VIRIDIS[i], VIRIDIS[i + 1]);
    std::array::from_fn(|c| (a[c] as f32 + (b[c] as f32 - a[c] as f32) * t).round() as u8)
}

pub fn colorize(map: &GrayMap) -> RgbImage {
    let mut out = RgbImage::new(map.width() as u32, map.height() as u32);
    for (px, &v) in out.pixels_mut().zip(map.data()) {
        *px = Rgb(colormap(v));
    }
    out
}

/// `(1 - alpha) * image + alpha * colormap(map)`.
pub fn overlay(image: &RasterImage, map: &GrayMap, alpha: f32) -> Result<RgbImage> {
    if image.dims() != map.dims() {
        return Err(SessError::DimensionMismatch {
            expected: image.dims(),
            got: map.dims(),
        });
    }
    let alpha = alpha.clamp(0.0, 1.0);
    let mut out = RgbImage::new(image.width() as u32, image.height() as u32);
    for (i, px) in out.pixels_mut().enumerate() {
        let (y, x) = (i / image.width(), i % image.width());
        let base = image.pixel(y, x);
        let heat = colormap(map.get(y, x));
        *px = Rgb(std::array::from_fn(|c| {
            let v = (1.0 - alpha) * base[c] * 255.0 + alpha * heat[c] as f32;
            v.round().clamp(0.0, 255.0) as u8
        }));
    }
    Ok(out)
}

/// Outline of the pixel rectangle `[x0, x1] x [y0, y1]` (inclusive), clipped.
pub fn draw_rect(img: &mut RgbImage, x0: i64, y0: i64, x1: i64, y1: i64, color: [u8; 3]) {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let mut put = |x: i64, y: i64| {
        if (0..w).contains(&x) && (0..h).contains(&y) {
            img.put_pixel(x as u32, y as u32, Rgb(color));
        }
    };
    for x in x0..=x1 {
        put(x, y0);
        put(x, y1);
    }
    for y in y0..=y1 {
        put(x0, y);
        put(x1, y);
    }
}

pub fn draw_line(img: &mut RgbImage, from: (i64, i64), to: (i64, i64), color: [u8; 3]) {
    let (mut x, mut y) = from;
    let dx = (to.0 - x).abs();
    let dy = -(to.1 - y).abs();
    let sx = if x < to.0 { 1 } else { -1 };
    let sy = if y < to.1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
            img.put_pixel(x as u32, y as u32, Rgb(color));
        }
        if (x, y) == to {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// Series colors for [`line_plot`].
pub const SERIES_COLORS: [[u8; 3]; 4] = [[31, 119, 180], [214, 39, 40], [44, 160, 44], [148, 103, 189]];

/// Minimal line chart: axes box, one polyline per series, a dot per point.
/// Axis ranges are taken from the data. No text is drawn.
pub fn line_plot(series: &[Vec<(f64, f64)>], width: u32, height: u32) -> RgbImage {
    let mut img = RgbImage::from_pixel(width, height, Rgb([255, 255, 255]));
    let margin = 16i64;
    let (w, h) = (width as i64, height as i64);
    draw_rect(&mut img, margin, margin, w - margin, h - margin, [0, 0, 0]);
    let pts: Vec<(f64, f64)> = series.iter().flatten().copied().collect();
    if pts.is_empty() {
        return img;
    }
    let (mut xmin, mut xmax, mut ymin, mut ymax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in &pts {
        xmin = xmin.min(x);
        xmax = xmax.max(x);
        ymin = ymin.min(y);
        ymax = ymax.max(y);
    }
    if xmax <= xmin {
        xmax = xmin + 1.0;
    }
    if ymax <= ymin {
        ymax = ymin + 1.0;
    }
    let inner_w = (w - 2 * margin - 8) as f64;
    let inner_h = (h - 2 * margin - 8) as f64;
    let to_px = |(x, y): (f64, f64)| {
        (
            margin + 4 + ((x - xmin) / (xmax - xmin) * inner_w).round() as i64,
            h - margin - 4 - ((y - ymin) / (ymax - ymin) * inner_h).round() as i64,
        )
    };
    for (k, s) in series.iter().enumerate() {
        let color = SERIES_COLORS[k % SERIES_COLORS.len()];
        for pair in s.windows(2) {
            draw_line(&mut img, to_px(pair[0]), to_px(pair[1]), color);
        }
        for &p in s {
            let (px, py) = to_px(p);
            draw_rect(&mut img, px - 1, py - 1, px + 1, py + 1, color);
        }
    }
    img
}

/// `(height, width)` with the longer side scaled to `long`.
pub fn fit_long_side(dims: (usize, usize), long: usize) -> (usize, usize) {
    let (h, w) = dims;
    if h >= w {
        (long, ((w * long) as f64 / h as f64).round().max(1.0) as usize)
    } else {
        (((h * long) as f64 / w as f64).round().max(1.0) as usize, long)
    }
}

pub fn thumbnail(image: &RasterImage, long: usize) -> Result<RasterImage> {
    let (h, w) = fit_long_side(image.dims(), long);
    resize_image(image, h, w)
}
