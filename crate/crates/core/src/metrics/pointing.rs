use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SessError};
use crate::imgproc::GrayMap;

/// Pixel box `[x0, y0, x1, y1]`, edges inclusive.
pub type BBox = [f64; 4];

/// Whether the saliency peak lands on an annotated object.
///
/// The peak is the first maximum in row-major order. With `tolerance` set,
/// a peak within that many pixels (Euclidean) of a box also counts.
pub fn pointing_game(sal: &GrayMap, boxes: &[BBox], tolerance: Option<f64>) -> Result<bool> {
    if boxes.is_empty() {
        return Err(SessError::invalid("pointing game needs at least one box"));
    }
    if let Some(b) = boxes.iter().find(|b| !(b[0] <= b[2] && b[1] <= b[3])) {
        return Err(SessError::invalid(format!("malformed box {b:?}")));
    }
    let (py, px) = sal.argmax();
    let (px, py) = (px as f64, py as f64);
    let tol = tolerance.unwrap_or(0.0).max(0.0);
    Ok(boxes.iter().any(|b| {
        let dx = (b[0] - px).max(px - b[2]).max(0.0);
        let dy = (b[1] - py).max(py - b[3]).max(0.0);
        (dx * dx + dy * dy).sqrt() <= tol
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassAccuracy {
    pub hits: usize,
    pub misses: usize,
    pub acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointingResult {
    pub per_class: BTreeMap<usize, ClassAccuracy>,
    /// Unweighted mean of per-class accuracies; 0 with no results.
    pub mean_acc: f64,
}

pub fn aggregate_pointing(results: &[(usize, bool)]) -> PointingResult {
    let mut counts: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for &(class, hit) in results {
        let e = counts.entry(class).or_default();
        if hit {
            e.0 += 1;
        } else {
            e.1 += 1;
        }
    }
    let per_class: BTreeMap<usize, ClassAccuracy> = counts
        .into_iter()
        .map(|(c, (hits, misses))| {
            let acc = hits as f64 / (hits + misses) as f64;
            (c, ClassAccuracy { hits, misses, acc })
        })
        .collect();
    let mean_acc = if per_class.is_empty() {
        0.0
    } else {
        per_class.values().map(|a| a.acc).sum::<f64>() / per_class.len() as f64
    };
    PointingResult {
        per_class,
        mean_acc,
    }
}
