//! Image- and pixel-level evaluation metrics.
//!
//! * ranking metrics over scored items: [`auroc`], [`average_precision`];
//! * region-aware segmentation metrics over score maps: [`aupro`], [`mean_spro`];
//! * the continual-learning [`forgetting_measure`].

mod forgetting;
mod ranking;
mod region_curve;
mod regions;

pub use forgetting::{forgetting_measure, ForgettingReport, TaskMatrix};
pub use ranking::{auroc, average_precision, LabeledScores};
pub use region_curve::{
    aupro, integrate_curve, mean_spro, pixel_scores, pro_curve, spro_curve, CurvePoint, ScoreMap,
    DEFAULT_PRO_LIMIT, DEFAULT_SPRO_LIMIT,
};
pub use regions::{connected_regions, Region, RegionSet, Saturation};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("need at least one positive and one negative item")]
    DegenerateLabels,
    #[error("need at least one positive item")]
    NoPositives,
    #[error("no ground-truth regions in any mask")]
    NoRegions,
    #[error("no normal pixels to compute a false-positive rate")]
    NoNormalPixels,
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("task matrix entry T[{l},{j}] is missing")]
    IncompleteMatrix { l: usize, j: usize },
    #[error("forgetting needs at least 2 tasks")]
    SingleTask,
}
