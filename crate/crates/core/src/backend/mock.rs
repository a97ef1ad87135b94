use crate::backend::{softmax, ClassifierBackend, ScoreMatrix, ScoreMode};
use crate::error::Result;
use crate::imgproc::RasterImage;

/// Synthetic four-class model: the logit of class `q` is the mean intensity
/// of quadrant `q` (0 top-left, 1 top-right, 2 bottom-left, 3 bottom-right).
///
/// Used as an analytically tractable oracle in tests and benchmarks.
#[derive(Debug, Clone)]
pub struct QuadrantMock {
    input_size: usize,
    mode: ScoreMode,
}

impl QuadrantMock {
    pub fn new(input_size: usize) -> Self {
        QuadrantMock {
            input_size,
            mode: ScoreMode::Softmax,
        }
    }

    pub fn with_mode(mut self, mode: ScoreMode) -> Self {
        self.mode = mode;
        self
    }

    /// Quadrant mean intensities of one patch.
    pub fn logits(&self, patch: &RasterImage) -> [f32; 4] {
        let (h, w) = patch.dims();
        let (mid_y, mid_x) = (h / 2, w / 2);
        let mut sums = [0.0f64; 4];
        let mut counts = [0usize; 4];
        for y in 0..h {
            for x in 0..w {
                let q = usize::from(y >= mid_y) * 2 + usize::from(x >= mid_x);
                let [r, g, b] = patch.pixel(y, x);
                sums[q] += (r as f64 + g as f64 + b as f64) / 3.0;
                counts[q] += 1;
            }
        }
        let mut out = [0.0f32; 4];
        for q in 0..4 {
            if counts[q] > 0 {
                out[q] = (sums[q] / counts[q] as f64) as f32;
            }
        }
        out
    }
}

/// The default 224-pixel quadrant mock. Only four classes are meaningful.
pub fn make_quadrant_mock(num_classes: usize) -> QuadrantMock {
    assert_eq!(num_classes, 4, "the quadrant mock has exactly four classes");
    QuadrantMock::new(224)
}

impl ClassifierBackend for QuadrantMock {
    fn input_size(&self) -> usize {
        self.input_size
    }

    fn num_classes(&self) -> usize {
        4
    }

    fn score_mode(&self) -> ScoreMode {
        self.mode
    }

    fn describe(&self) -> String {
        format!("mock:quadrant@{}", self.input_size)
    }

    fn infer(&self, batch: &[RasterImage]) -> Result<ScoreMatrix> {
        let mut data = Vec::with_capacity(batch.len() * 4);
        for patch in batch {
            let logits = self.logits(patch);
            match self.mode {
                ScoreMode::Softmax => data.extend(softmax(&logits)),
                ScoreMode::Logit => data.extend(logits),
            }
        }
        ScoreMatrix::new(batch.len(), 4, data)
    }
}
