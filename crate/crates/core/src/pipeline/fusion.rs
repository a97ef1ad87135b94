//! Calibration of per-patch maps into the original frame, channel weighting
//! and indicator-weighted fusion.
//!
//! A calibrated layer is zero outside the region its patch maps to, so layers
//! are stored as a bounding box plus dense values. Everything outside the box
//! is exactly zero.

use crate::backend::ScoreMode;
use crate::error::{Result, SessError};
use crate::imgproc::{axis_taps, minmax_normalize, GrayMap, Sampling, Tap};
use crate::pipeline::PatchSpec;

/// One calibrated map: nonzero support is confined to `rows x cols`.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibratedLayer {
    dims: (usize, usize),
    /// `[y0, y1)` of the support box.
    rows: (usize, usize),
    /// `[x0, x1)` of the support box.
    cols: (usize, usize),
    values: Vec<f32>,
}

impl CalibratedLayer {
    /// A layer given as a full-size dense map.
    pub fn from_dense(map: &GrayMap) -> Self {
        CalibratedLayer {
            dims: map.dims(),
            rows: (0, map.height()),
            cols: (0, map.width()),
            values: map.data().to_vec(),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.dims
    }

    /// Support box as `(y0, x0, y1, x1)`.
    pub fn support(&self) -> (usize, usize, usize, usize) {
        (self.rows.0, self.cols.0, self.rows.1, self.cols.1)
    }

    pub fn get(&self, y: usize, x: usize) -> f32 {
        if y < self.rows.0 || y >= self.rows.1 || x < self.cols.0 || x >= self.cols.1 {
            return 0.0;
        }
        let w = self.cols.1 - self.cols.0;
        self.values[(y - self.rows.0) * w + (x - self.cols.0)]
    }

    pub fn to_dense(&self) -> GrayMap {
        let (h, w) = self.dims;
        let mut out = vec![0.0f32; h * w];
        let bw = self.cols.1 - self.cols.0;
        if bw > 0 {
            for (r, row) in self.values.chunks_exact(bw).enumerate() {
                let y = self.rows.0 + r;
                out[y * w + self.cols.0..y * w + self.cols.1].copy_from_slice(row);
            }
        }
        GrayMap::new(h, w, out).expect("layer dims are nonzero")
    }

    fn scale(&mut self, factor: f32) {
        self.values.iter_mut().for_each(|v| *v *= factor);
    }
}

// Output coordinates along one axis whose interpolation taps touch the
// source interval [start, end).
fn touched_range(taps: &[Tap], start: usize, end: usize) -> (usize, usize) {
    let touches = |t: &Tap| (t.lo >= start && t.lo < end) || (t.hi >= start && t.hi < end);
    match taps.iter().position(touches) {
        None => (0, 0),
        Some(first) => {
            let last = taps.iter().rposition(touches).unwrap();
            (first, last + 1)
        }
    }
}

/// Pastes a patch map onto a zero canvas of its scaled frame and resamples
/// the canvas bilinearly to `original_dims`, evaluating only where the patch
/// can contribute.
pub fn calibrate_layer(
    patch_map: &GrayMap,
    spec: &PatchSpec,
    original_dims: (usize, usize),
) -> Result<CalibratedLayer> {
    spec.check()?;
    let (pw, ph) = spec.size;
    if patch_map.dims() != (ph, pw) {
        return Err(SessError::DimensionMismatch {
            expected: (ph, pw),
            got: patch_map.dims(),
        });
    }
    let (oh, ow) = original_dims;
    if oh == 0 || ow == 0 {
        return Err(SessError::DegenerateImage {
            height: oh,
            width: ow,
        });
    }
    let (sh, sw) = spec.scaled_dims;
    let (px, py) = spec.origin;
    let ys = axis_taps(sh, oh, Sampling::HalfPixel);
    let xs = axis_taps(sw, ow, Sampling::HalfPixel);
    let rows = touched_range(&ys, py, py + ph);
    let cols = touched_range(&xs, px, px + pw);

    let canvas = |y: usize, x: usize| -> f32 {
        if y >= py && y < py + ph && x >= px && x < px + pw {
            patch_map.get(y - py, x - px)
        } else {
            0.0
        }
    };
    let mut values = Vec::with_capacity((rows.1 - rows.0) * (cols.1 - cols.0));
    for ty in &ys[rows.0..rows.1] {
        for tx in &xs[cols.0..cols.1] {
            let top = canvas(ty.lo, tx.lo) + (canvas(ty.lo, tx.hi) - canvas(ty.lo, tx.lo)) * tx.frac;
            let bottom =
                canvas(ty.hi, tx.lo) + (canvas(ty.hi, tx.hi) - canvas(ty.hi, tx.lo)) * tx.frac;
            values.push(top + (bottom - top) * ty.frac);
        }
    }
    Ok(CalibratedLayer {
        dims: original_dims,
        rows,
        cols,
        values,
    })
}

/// Dense form of [`calibrate_layer`].
pub fn calibrate(
    patch_map: &GrayMap,
    spec: &PatchSpec,
    original_dims: (usize, usize),
) -> Result<GrayMap> {
    Ok(calibrate_layer(patch_map, spec, original_dims)?.to_dense())
}

/// Calibrated layers together with their channel weights.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibratedStack {
    dims: (usize, usize),
    layers: Vec<CalibratedLayer>,
    weights: Vec<f32>,
    mode: ScoreMode,
    weighted: bool,
}

impl CalibratedStack {
    pub fn new(dims: (usize, usize), mode: ScoreMode) -> Self {
        CalibratedStack {
            dims,
            layers: Vec::new(),
            weights: Vec::new(),
            mode,
            weighted: false,
        }
    }

    pub fn push(&mut self, layer: CalibratedLayer, weight: f32) -> Result<()> {
        if layer.dims != self.dims {
            return Err(SessError::DimensionMismatch {
                expected: self.dims,
                got: layer.dims,
            });
        }
        self.layers.push(layer);
        self.weights.push(weight);
        Ok(())
    }

    pub fn push_dense(&mut self, map: &GrayMap, weight: f32) -> Result<()> {
        self.push(CalibratedLayer::from_dense(map), weight)
    }

    pub fn dims(&self) -> (usize, usize) {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn layers(&self) -> &[CalibratedLayer] {
        &self.layers
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn is_weighted(&self) -> bool {
        self.weighted
    }
}

fn check_weight(w: f32, mode: ScoreMode, k: usize) -> Result<()> {
    if !w.is_finite() {
        return Err(SessError::Internal(format!("channel weight {k} is not finite")));
    }
    if mode == ScoreMode::Softmax && w < 0.0 {
        return Err(SessError::Internal(format!(
            "channel weight {k} is negative ({w}) although scores are probabilities"
        )));
    }
    Ok(())
}

/// Multiplies every layer by its scalar weight. Applying twice is an error.
pub fn apply_channel_weights(mut stack: CalibratedStack) -> Result<CalibratedStack> {
    if stack.weighted {
        return Err(SessError::Internal("channel weights already applied".into()));
    }
    for (k, (layer, &w)) in stack.layers.iter_mut().zip(&stack.weights).enumerate() {
        check_weight(w, stack.mode, k)?;
        layer.scale(w);
    }
    stack.weighted = true;
    Ok(stack)
}

/// Streaming form of the indicator-weighted average: layers are added one at
/// a time, so a full stack never has to be materialized.
///
/// Per pixel the result is `sum(v * [v > theta]) / sum([v > theta])`, with
/// pixels where no layer passes the indicator set to zero.
#[derive(Debug, Clone)]
pub struct FusionAccumulator {
    dims: (usize, usize),
    theta: f32,
    sum: Vec<f64>,
    count: Vec<u32>,
    layers: u32,
}

impl FusionAccumulator {
    pub fn new(dims: (usize, usize), theta: f32) -> Self {
        let n = dims.0 * dims.1;
        FusionAccumulator {
            dims,
            theta,
            sum: vec![0.0; n],
            count: vec![0; n],
            layers: 0,
        }
    }

    /// Adds `weight * layer`.
    pub fn add(&mut self, layer: &CalibratedLayer, weight: f32) -> Result<()> {
        if layer.dims != self.dims {
            return Err(SessError::DimensionMismatch {
                expected: self.dims,
                got: layer.dims,
            });
        }
        let w = self.dims.1;
        let (y0, y1) = layer.rows;
        let (x0, x1) = layer.cols;
        let bw = x1 - x0;
        // Padding zeros outside the support pass the indicator only for theta < 0.
        let zero_passes = 0.0 > self.theta;
        if zero_passes {
            self.count.iter_mut().for_each(|c| *c += 1);
        }
        for y in y0..y1 {
            let row = &layer.values[(y - y0) * bw..(y - y0 + 1) * bw];
            for (x, &raw) in (x0..x1).zip(row) {
                let v = raw * weight;
                let i = y * w + x;
                if zero_passes {
                    self.count[i] -= 1;
                }
                if v > self.theta {
                    self.sum[i] += v as f64;
                    self.count[i] += 1;
                }
            }
        }
        self.layers += 1;
        Ok(())
    }

    /// Average before normalization.
    pub fn average(&self) -> GrayMap {
        let data = self
            .sum
            .iter()
            .zip(&self.count)
            .map(|(&s, &c)| if c == 0 { 0.0 } else { (s / c as f64) as f32 })
            .collect();
        GrayMap::new(self.dims.0, self.dims.1, data).expect("accumulator dims are nonzero")
    }

    /// Min-Max normalized fusion result.
    pub fn finish(&self) -> GrayMap {
        minmax_normalize(&self.average())
    }
}

/// Fuses a stack whose layers already carry their channel weights.
pub fn fuse(stack: &CalibratedStack, theta: f32) -> Result<GrayMap> {
    if stack.is_empty() {
        return Err(SessError::invalid("cannot fuse an empty stack"));
    }
    let mut acc = FusionAccumulator::new(stack.dims, theta);
    for layer in &stack.layers {
        acc.add(layer, 1.0)?;
    }
    Ok(acc.finish())
}
