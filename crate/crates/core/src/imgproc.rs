//! Raster primitives: RGB images, single-channel maps, bilinear resampling,
//! separable Gaussian filtering and Min-Max normalization.
//!
//! All pixel math runs in `f32` storage with `f64` accumulation. Rasters are
//! row-major; RGB images are stored interleaved (`HWC`).

use std::io::{Read, Write};
use std::path::Path;

use image::{GrayImage, Luma, Rgb, RgbImage};

use crate::error::{Result, SessError};

/// Three-channel image with values in `[0, 1]` (sRGB, not linearized).
#[derive(Clone, Debug, PartialEq)]
pub struct RasterImage {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

/// Single-channel real raster; used for every saliency map in the pipeline.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayMap {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

fn check_dims(height: usize, width: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(SessError::DegenerateImage { height, width });
    }
    Ok(())
}

impl RasterImage {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        check_dims(height, width)?;
        if data.len() != height * width * 3 {
            return Err(SessError::invalid(format!(
                "RGB buffer of {} values does not match {height}x{width}x3",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
            return Err(SessError::invalid(format!(
                "pixel value {} at index {i} outside [0, 1]",
                data[i]
            )));
        }
        Ok(RasterImage {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, rgb: [f32; 3]) -> Result<Self> {
        check_dims(height, width)?;
        let data = (0..height * width).flat_map(|_| rgb).collect();
        RasterImage::new(height, width, data)
    }

    /// Builds an image from a per-pixel closure `(y, x) -> [r, g, b]`.
    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> [f32; 3],
    ) -> Result<Self> {
        check_dims(height, width)?;
        let mut data = Vec::with_capacity(height * width * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend(f(y, x));
            }
        }
        RasterImage::new(height, width, data)
    }

    // Skips value validation; callers only pass convex combinations of valid pixels.
    pub(crate) fn from_raw_unchecked(height: usize, width: usize, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), height * width * 3);
        RasterImage {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn pixel(&self, y: usize, x: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, y: usize, x: usize, rgb: [f32; 3]) {
        let i = (y * self.width + x) * 3;
        for (c, v) in rgb.into_iter().enumerate() {
            self.data[i + c] = v.clamp(0.0, 1.0);
        }
    }

    /// Copies the `height x width` window whose top-left corner is `(y0, x0)`.
    pub fn crop(&self, y0: usize, x0: usize, height: usize, width: usize) -> Result<Self> {
        check_dims(height, width)?;
        if y0 + height > self.height || x0 + width > self.width {
            return Err(SessError::invalid(format!(
                "crop {height}x{width} at ({y0}, {x0}) exceeds {}x{}",
                self.height, self.width
            )));
        }
        let mut data = Vec::with_capacity(height * width * 3);
        for y in y0..y0 + height {
            let start = (y * self.width + x0) * 3;
            data.extend_from_slice(&self.data[start..start + width * 3]);
        }
        Ok(RasterImage::from_raw_unchecked(height, width, data))
    }

    /// Multiplies every pixel by the matching mask value (mask clamped to `[0, 1]`).
    pub fn masked(&self, mask: &GrayMap) -> Result<Self> {
        if mask.dims() != self.dims() {
            return Err(SessError::DimensionMismatch {
                expected: self.dims(),
                got: mask.dims(),
            });
        }
        let data = self
            .data
            .chunks_exact(3)
            .zip(mask.data())
            .flat_map(|(px, m)| {
                let m = m.clamp(0.0, 1.0);
                [px[0] * m, px[1] * m, px[2] * m]
            })
            .collect();
        Ok(RasterImage::from_raw_unchecked(self.height, self.width, data))
    }

    /// Per-pixel mean over the three channels.
    pub fn intensity(&self) -> GrayMap {
        let data = self
            .data
            .chunks_exact(3)
            .map(|px| (px[0] + px[1] + px[2]) / 3.0)
            .collect();
        GrayMap {
            height: self.height,
            width: self.width,
            data,
        }
    }

    pub fn from_rgb8(img: &RgbImage) -> Result<Self> {
        let (w, h) = img.dimensions();
        let data = img.as_raw().iter().map(|&v| v as f32 / 255.0).collect();
        RasterImage::new(h as usize, w as usize, data)
    }

    pub fn to_rgb8(&self) -> RgbImage {
        let mut out = RgbImage::new(self.width as u32, self.height as u32);
        for (dst, src) in out.pixels_mut().zip(self.data.chunks_exact(3)) {
            *dst = Rgb([to_u8(src[0]), to_u8(src[1]), to_u8(src[2])]);
        }
        out
    }

    /// Decodes a PNG or JPEG file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(SessError::FileNotFound(path.to_path_buf()));
        }
        let img = image::open(path)?.to_rgb8();
        RasterImage::from_rgb8(&img)
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_rgb8()
            .save_with_format(path.as_ref(), image::ImageFormat::Png)?;
        Ok(())
    }
}

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

impl GrayMap {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        check_dims(height, width)?;
        if data.len() != height * width {
            return Err(SessError::invalid(format!(
                "map buffer of {} values does not match {height}x{width}",
                data.len()
            )));
        }
        Ok(GrayMap {
            height,
            width,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        GrayMap::filled(height, width, 0.0)
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Result<Self> {
        check_dims(height, width)?;
        Ok(GrayMap {
            height,
            width,
            data: vec![value; height * width],
        })
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> f32,
    ) -> Result<Self> {
        check_dims(height, width)?;
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Ok(GrayMap {
            height,
            width,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn get(&self, y: usize, x: usize) -> f32 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, v: f32) {
        self.data[y * self.width + x] = v;
    }

    pub fn min(&self) -> f32 {
        self.data.iter().copied().fold(f32::INFINITY, f32::min)
    }

    pub fn max(&self) -> f32 {
        self.data.iter().copied().fold(f32::NEG_INFINITY, f32::max)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Location `(y, x)` of the largest value; ties resolve to the first in
    /// row-major order.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, &v) in self.data.iter().enumerate() {
            if v > self.data[best] {
                best = i;
            }
        }
        (best / self.width, best % self.width)
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> GrayMap {
        GrayMap {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// 8-bit grayscale view, values clamped to `[0, 1]`.
    pub fn to_luma8(&self) -> GrayImage {
        let mut out = GrayImage::new(self.width as u32, self.height as u32);
        for (dst, &v) in out.pixels_mut().zip(&self.data) {
            *dst = Luma([to_u8(v)]);
        }
        out
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_luma8()
            .save_with_format(path.as_ref(), image::ImageFormat::Png)?;
        Ok(())
    }

    /// Raw little-endian `f32`, row-major, no header.
    pub fn to_f32_bytes(&self) -> Vec<u8> {
        self.data.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    pub fn from_f32_bytes(height: usize, width: usize, bytes: &[u8]) -> Result<Self> {
        check_dims(height, width)?;
        let expected = height * width * 4;
        if bytes.len() != expected {
            return Err(SessError::ShapeMismatch {
                expected,
                got: bytes.len(),
            });
        }
        let data: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(SessError::NonFinite { index });
        }
        GrayMap::new(height, width, data)
    }

    pub fn save_f32(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| SessError::io(path, e))?;
        f.write_all(&self.to_f32_bytes())
            .map_err(|e| SessError::io(path, e))
    }

    pub fn load_f32(path: impl AsRef<Path>, height: usize, width: usize) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| SessError::io(path, e))?;
        GrayMap::from_f32_bytes(height, width, &bytes)
    }
}

/// Source coordinate convention used when resampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sampling {
    /// Pixel centers at `i + 0.5`; output `x` reads source `(x + 0.5) * src / dst - 0.5`.
    #[default]
    HalfPixel,
    /// First and last samples coincide: output `x` reads source `x * (src - 1) / (dst - 1)`.
    AlignCorners,
}

/// Linear interpolation taps for one output coordinate.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Tap {
    pub lo: usize,
    pub hi: usize,
    pub frac: f32,
}

pub(crate) fn axis_taps(src: usize, dst: usize, sampling: Sampling) -> Vec<Tap> {
    let last = (src - 1) as f64;
    (0..dst)
        .map(|x| {
            let s = match sampling {
                Sampling::HalfPixel => (x as f64 + 0.5) * src as f64 / dst as f64 - 0.5,
                Sampling::AlignCorners if dst == 1 => 0.0,
                Sampling::AlignCorners => x as f64 * last / (dst - 1) as f64,
            }
            .clamp(0.0, last);
            let lo = s.floor() as usize;
            let hi = (lo + 1).min(src - 1);
            Tap {
                lo,
                hi,
                frac: (s - lo as f64) as f32,
            }
        })
        .collect()
}

fn resize_interleaved(
    src: &[f32],
    (h, w): (usize, usize),
    channels: usize,
    (out_h, out_w): (usize, usize),
    sampling: Sampling,
) -> Vec<f32> {
    if (h, w) == (out_h, out_w) && sampling == Sampling::HalfPixel {
        return src.to_vec();
    }
    let ys = axis_taps(h, out_h, sampling);
    let xs = axis_taps(w, out_w, sampling);
    let mut out = vec![0.0f32; out_h * out_w * channels];
    for (oy, ty) in ys.iter().enumerate() {
        let row_lo = ty.lo * w;
        let row_hi = ty.hi * w;
        for (ox, tx) in xs.iter().enumerate() {
            let o = (oy * out_w + ox) * channels;
            for c in 0..channels {
                let p00 = src[(row_lo + tx.lo) * channels + c];
                let p01 = src[(row_lo + tx.hi) * channels + c];
                let p10 = src[(row_hi + tx.lo) * channels + c];
                let p11 = src[(row_hi + tx.hi) * channels + c];
                let top = p00 + (p01 - p00) * tx.frac;
                let bottom = p10 + (p11 - p10) * tx.frac;
                out[o + c] = top + (bottom - top) * ty.frac;
            }
        }
    }
    out
}

/// Bilinear resize with half-pixel sampling.
pub fn bilinear_resize(map: &GrayMap, out_h: usize, out_w: usize) -> Result<GrayMap> {
    bilinear_resize_with(map, out_h, out_w, Sampling::HalfPixel)
}

pub fn bilinear_resize_with(
    map: &GrayMap,
    out_h: usize,
    out_w: usize,
    sampling: Sampling,
) -> Result<GrayMap> {
    check_dims(out_h, out_w)?;
    let data = resize_interleaved(&map.data, map.dims(), 1, (out_h, out_w), sampling);
    GrayMap::new(out_h, out_w, data)
}

pub fn resize_image(img: &RasterImage, out_h: usize, out_w: usize) -> Result<RasterImage> {
    check_dims(out_h, out_w)?;
    let mut data = resize_interleaved(&img.data, img.dims(), 3, (out_h, out_w), Sampling::HalfPixel);
    // Interpolation can step a hair outside [0, 1] through rounding.
    data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    Ok(RasterImage::from_raw_unchecked(out_h, out_w, data))
}

/// Output dimensions when the shorter side of `(h, w)` is scaled to `target`.
pub fn shorter_side_dims(h: usize, w: usize, target: usize) -> Result<(usize, usize)> {
    check_dims(h, w)?;
    if target == 0 {
        return Err(SessError::invalid("target side must be at least 1"));
    }
    let scale = |long: usize, short: usize| {
        ((long as f64 * target as f64 / short as f64).round() as usize).max(1)
    };
    Ok(if h <= w {
        (target, scale(w, h))
    } else {
        (scale(h, w), target)
    })
}

/// Scales the shorter side to `target`, keeping the aspect ratio.
pub fn resize_shorter_side(img: &RasterImage, target: usize) -> Result<RasterImage> {
    let (out_h, out_w) = shorter_side_dims(img.height, img.width, target)?;
    resize_image(img, out_h, out_w)
}

/// Normalized 1-D Gaussian taps for an odd `size`.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Result<Vec<f64>> {
    if size == 0 || size % 2 == 0 {
        return Err(SessError::invalid(format!(
            "Gaussian kernel size must be odd and positive, got {size}"
        )));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(SessError::invalid(format!(
            "Gaussian sigma must be positive, got {sigma}"
        )));
    }
    let r = (size / 2) as isize;
    let raw: Vec<f64> = (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|v| v / sum).collect())
}

/// Symmetric reflection `dcba|abcd|dcba`, repeated for offsets beyond one period.
fn reflect(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = i.rem_euclid(period) as usize;
    if m < n {
        m
    } else {
        2 * n - 1 - m
    }
}

fn blur_interleaved(
    src: &[f32],
    (h, w): (usize, usize),
    channels: usize,
    kernel: &[f64],
) -> Vec<f32> {
    let r = (kernel.len() / 2) as isize;
    let mut tmp = vec![0.0f32; src.len()];
    for y in 0..h {
        for x in 0..w {
            for c in 0..channels {
                let mut acc = 0.0f64;
                for (k, wgt) in kernel.iter().enumerate() {
                    let sx = reflect(x as isize + k as isize - r, w);
                    acc += wgt * src[(y * w + sx) * channels + c] as f64;
                }
                tmp[(y * w + x) * channels + c] = acc as f32;
            }
        }
    }
    let mut out = vec![0.0f32; src.len()];
    for y in 0..h {
        for x in 0..w {
            for c in 0..channels {
                let mut acc = 0.0f64;
                for (k, wgt) in kernel.iter().enumerate() {
                    let sy = reflect(y as isize + k as isize - r, h);
                    acc += wgt * tmp[(sy * w + x) * channels + c] as f64;
                }
                out[(y * w + x) * channels + c] = acc as f32;
            }
        }
    }
    out
}

/// Separable Gaussian filter with reflected borders.
pub fn gaussian_blur(map: &GrayMap, kernel: usize, sigma: f64) -> Result<GrayMap> {
    let taps = gaussian_kernel(kernel, sigma)?;
    if kernel == 1 {
        return Ok(map.clone());
    }
    let data = blur_interleaved(&map.data, map.dims(), 1, &taps);
    GrayMap::new(map.height, map.width, data)
}

pub fn gaussian_blur_image(img: &RasterImage, kernel: usize, sigma: f64) -> Result<RasterImage> {
    let taps = gaussian_kernel(kernel, sigma)?;
    if kernel == 1 {
        return Ok(img.clone());
    }
    let mut data = blur_interleaved(&img.data, img.dims(), 3, &taps);
    data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    Ok(RasterImage::from_raw_unchecked(img.height, img.width, data))
}

/// `(x - min) / (max - min)`; a constant map becomes all zeros.
pub fn minmax_normalize(map: &GrayMap) -> GrayMap {
    let (lo, hi) = map
        .data
        .iter()
        .filter(|v| v.is_finite())
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let range = hi - lo;
    let data = if range > 0.0 && range.is_finite() {
        map.data
            .iter()
            .map(|&v| ((v - lo) / range).clamp(0.0, 1.0))
            .collect()
    } else {
        vec![0.0; map.data.len()]
    };
    GrayMap {
        height: map.height,
        width: map.width,
        data,
    }
}
