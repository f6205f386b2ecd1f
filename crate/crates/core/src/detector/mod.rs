//! Memory-bank reference detector.
//!
//! Training collects every patch descriptor of the normal training images
//! into a [`MemoryBank`], optionally thinned by greedy k-center coreset
//! selection in a randomly projected space. At test time each patch is
//! scored by its distance to the nearest bank vector; the image score is
//! the largest patch score, optionally re-weighted by the softmax mass of
//! the patch's `b` nearest bank vectors.

mod bank;
mod coreset;
mod projector;
mod render;
mod scoring;

pub use bank::{MemoryBank, BANK_MAGIC, BANK_VERSION};
pub use coreset::{
    coreset_select, covering_radius, extend_bank_for_task, CoresetBudget, CoresetParams,
};
pub use projector::{make_projector, Projector};
pub use render::render_anomaly_map;
pub use scoring::{reweight, score_image, score_patches, ImageScore, PatchScores, ScoreResult};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DetectorError {
    #[error("no feature grids supplied")]
    EmptyInput,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },
    #[error("memory bank is empty")]
    EmptyBank,
    #[error("projection dims invalid: in={in_dim}, out={out_dim}")]
    BadDims { in_dim: usize, out_dim: usize },
    #[error("coreset size {l} outside [1, {available}]")]
    LOutOfRange { l: usize, available: usize },
    #[error("neighbour count b={b} outside [1, {bank}]")]
    BOutOfRange { b: usize, bank: usize },
    #[error("task {task} must exceed every existing task tag (max {max_existing})")]
    TaskOrderViolation { task: u32, max_existing: u32 },
    #[error("invalid anomaly-map geometry: {0}")]
    BadGeometry(String),
    #[error("bad magic: expected IADB")]
    BadMagic,
    #[error("unsupported bank snapshot version {0}")]
    VersionUnsupported(u16),
    #[error("truncated bank snapshot: expected {expected} bytes, found {actual}")]
    TruncatedFile { expected: usize, actual: usize },
    #[error("invalid bank contents: {0}")]
    InvalidBank(String),
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
}

/// Squared Euclidean distance accumulated in double precision.
#[inline]
pub(crate) fn squared_distance(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = f64::from(*x) - f64::from(*y);
            d * d
        })
        .sum()
}
