//! Core engine: dataset handling, evaluation protocols, metrics and the
//! memory-bank reference detector.

pub mod dataset;
pub mod detector;
pub mod features;
pub mod image;
pub mod metrics;
pub mod protocols;
pub mod rng;
pub mod synth;
