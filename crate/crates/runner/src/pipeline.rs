//! Fitting and applying the memory-bank detector to image samples.

use std::time::{Duration, Instant};

use iadbench_core::dataset::Sample;
use iadbench_core::detector::{
    coreset_select, extend_bank_for_task, render_anomaly_map, score_image, CoresetParams,
    DetectorError, MemoryBank,
};
use iadbench_core::features::{extract_features, FeatureError, PatchFeatureGrid};
use iadbench_core::metrics::ScoreMap;

use crate::config::DetectorConfig;
use crate::RunnerError;

/// A fitted detector: feature geometry, bank and scoring parameters.
#[derive(Debug, Clone)]
pub struct Detector {
    config: DetectorConfig,
    bank: MemoryBank,
}

/// Scores for one test image.
#[derive(Debug, Clone)]
pub struct Inference {
    pub score: f64,
    pub map: ScoreMap,
    pub elapsed: Duration,
}

fn feature_err(e: FeatureError) -> RunnerError {
    RunnerError::Detector(e.to_string())
}

fn detector_err(e: DetectorError) -> RunnerError {
    RunnerError::Detector(e.to_string())
}

impl Detector {
    pub fn coreset_params(config: &DetectorConfig, seed: u64) -> CoresetParams {
        CoresetParams {
            budget: config
                .coreset
                .unwrap_or(iadbench_core::detector::CoresetBudget::Fraction(1.0)),
            projection_dim: config.projection_dim,
            seed,
        }
    }

    pub fn features(
        config: &DetectorConfig,
        samples: &[&Sample],
    ) -> Result<Vec<PatchFeatureGrid>, RunnerError> {
        samples
            .iter()
            .map(|s| extract_features(&s.image, &config.feature).map_err(feature_err))
            .collect()
    }

    /// Builds the bank from `train` and thins it by coreset selection.
    pub fn fit(config: &DetectorConfig, train: &[&Sample], seed: u64) -> Result<Self, RunnerError> {
        let full = MemoryBank::build(&Self::features(config, train)?).map_err(detector_err)?;
        let bank = match config.coreset {
            None => full,
            Some(_) => {
                let picked = coreset_select(&full, &Self::coreset_params(config, seed))
                    .map_err(detector_err)?;
                full.subset(&picked)
            }
        };
        Ok(Self {
            config: config.clone(),
            bank,
        })
    }

    /// An empty detector for continual training.
    pub fn empty(config: &DetectorConfig) -> Self {
        let dim = config.feature.patch_size * config.feature.patch_size;
        Self {
            config: config.clone(),
            bank: MemoryBank::empty(dim),
        }
    }

    /// Appends the coreset of `train` as task `task`.
    pub fn extend(&mut self, train: &[&Sample], task: u32, seed: u64) -> Result<(), RunnerError> {
        let grids = Self::features(&self.config, train)?;
        let params = Self::coreset_params(&self.config, seed);
        self.bank =
            extend_bank_for_task(&self.bank, &grids, task, &params).map_err(detector_err)?;
        Ok(())
    }

    pub fn bank(&self) -> &MemoryBank {
        &self.bank
    }

    pub fn infer(&self, sample: &Sample) -> Result<Inference, RunnerError> {
        let start = Instant::now();
        let grid = extract_features(&sample.image, &self.config.feature).map_err(feature_err)?;
        let scored = score_image(&self.bank, &grid, self.config.b).map_err(detector_err)?;
        let map = render_anomaly_map(
            &scored.patches.distances,
            grid.grid_h(),
            grid.grid_w(),
            &self.config.feature,
            sample.image.height(),
            sample.image.width(),
            self.config.smoothing_sigma,
        )
        .map_err(detector_err)?;
        Ok(Inference {
            score: scored.result.s,
            map,
            elapsed: start.elapsed(),
        })
    }
}
