use crate::error::{Result, SessError};
use crate::pipeline::PatchSpec;

/// Number of patches kept when the lowest-scoring `ratio` percent are dropped.
///
/// Rounds up and never drops below one.
pub fn keep_count(len: usize, ratio: f64) -> usize {
    let exact = len as f64 * (100.0 - ratio) / 100.0;
    // Absorb representation error such as 100 * 30 / 100 = 30.000000000000004.
    ((exact - 1e-9).ceil().max(1.0) as usize).min(len)
}

/// Indices of the patches whose scores fall in the top `(100 - ratio)` percent,
/// returned in enumeration order. Ties keep the earlier patch.
pub fn prefilter_indices(scores: &[f32], ratio: f64) -> Result<Vec<usize>> {
    if scores.is_empty() {
        return Err(SessError::invalid("pre-filter needs at least one patch"));
    }
    if !(0.0..100.0).contains(&ratio) {
        return Err(SessError::invalid(format!(
            "pre-filter ratio must lie in [0, 100), got {ratio}"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // NaN sorts last so it can never displace a real score.
    order.sort_by(|&a, &b| {
        let (sa, sb) = (scores[a], scores[b]);
        match (sa.is_nan(), sb.is_nan()) {
            (true, true) => std::cmp::Ordering::Equal,
            (true, false) => std::cmp::Ordering::Greater,
            (false, true) => std::cmp::Ordering::Less,
            _ => sb.partial_cmp(&sa).unwrap(),
        }
    });
    order.truncate(keep_count(scores.len(), ratio));
    order.sort_unstable();
    Ok(order)
}

pub fn prefilter(
    specs: &[PatchSpec],
    scores: &[f32],
    ratio: f64,
) -> Result<(Vec<PatchSpec>, Vec<f32>)> {
    if specs.len() != scores.len() {
        return Err(SessError::invalid(format!(
            "{} patches but {} scores",
            specs.len(),
            scores.len()
        )));
    }
    let kept = prefilter_indices(scores, ratio)?;
    Ok((
        kept.iter().map(|&i| specs[i]).collect(),
        kept.iter().map(|&i| scores[i]).collect(),
    ))
}
