//! Quantitative evaluation: insertion/deletion curves and the Pointing Game.

mod curves;
mod dataset;
mod pointing;

pub use curves::{
    class_probabilities, deletion_curve, insertion_curve, overall_score, pixels_per_step,
    saliency_order, trapezoid, CurveConfig, CurveKind, CurveResult, DeletionFill,
};
pub use dataset::{load_dataset, parse_dataset, DatasetRecord, ObjectAnnotation};
pub use pointing::{aggregate_pointing, pointing_game, BBox, ClassAccuracy, PointingResult};
