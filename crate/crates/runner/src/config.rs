//! Experiment configuration: strict JSON, validated with key-path errors.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use iadbench_core::detector::CoresetBudget;
use iadbench_core::features::FeatureProviderConfig;
use iadbench_core::metrics::{DEFAULT_PRO_LIMIT, DEFAULT_SPRO_LIMIT};
use iadbench_core::protocols::{SettingConfig, DEFAULT_SUPERVISED_N};
use iadbench_core::synth::SynthSpec;

use crate::RunnerError;

pub const SCHEMA_VERSION: u32 = 1;
pub const DATA_ROOT_ENV: &str = "IADBENCH_DATA_ROOT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    #[serde(default)]
    pub dataset: DatasetSource,
    /// Empty means every category of the dataset.
    #[serde(default)]
    pub categories: Vec<String>,
    pub setting: Vec<SettingEntry>,
    #[serde(default)]
    pub detector: DetectorConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
}

/// Exactly one of `path` or `synthetic`; with neither, the dataset root is
/// taken from `IADBENCH_DATA_ROOT`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SynthSpec>,
    /// Generation seed for `synthetic`; defaults to the experiment seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SettingEntry {
    Unsupervised,
    Supervised {
        #[serde(default = "default_supervised_n")]
        n: usize,
    },
    Fewshot {
        m: usize,
        #[serde(default = "one")]
        rotation_k: usize,
        #[serde(default)]
        allow_off_grid: bool,
    },
    Noisy {
        noise_ratios: Vec<f64>,
        #[serde(default)]
        allow_off_grid: bool,
    },
    Continual {
        /// Empty means the experiment's category order.
        #[serde(default)]
        order: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    #[serde(default)]
    pub feature: FeatureProviderConfig,
    /// `null` keeps the full bank.
    #[serde(default = "default_coreset")]
    pub coreset: Option<CoresetBudget>,
    #[serde(default)]
    pub projection_dim: Option<usize>,
    #[serde(default = "one")]
    pub b: usize,
    #[serde(default = "default_sigma")]
    pub smoothing_sigma: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            feature: FeatureProviderConfig::default(),
            coreset: default_coreset(),
            projection_dim: None,
            b: 1,
            smoothing_sigma: default_sigma(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricName {
    ImageAuroc,
    ImageAp,
    PixelAuroc,
    PixelAp,
    Aupro,
    Spro,
}

impl MetricName {
    pub const ALL: [MetricName; 6] = [
        MetricName::ImageAuroc,
        MetricName::ImageAp,
        MetricName::PixelAuroc,
        MetricName::PixelAp,
        MetricName::Aupro,
        MetricName::Spro,
    ];

    pub fn key(self) -> &'static str {
        match self {
            MetricName::ImageAuroc => "image_auroc",
            MetricName::ImageAp => "image_ap",
            MetricName::PixelAuroc => "pixel_auroc",
            MetricName::PixelAp => "pixel_ap",
            MetricName::Aupro => "aupro",
            MetricName::Spro => "spro",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            MetricName::ImageAuroc => "Image AUROC",
            MetricName::ImageAp => "Image AP",
            MetricName::PixelAuroc => "Pixel AUROC",
            MetricName::PixelAp => "Pixel AP",
            MetricName::Aupro => "AUPRO",
            MetricName::Spro => "sPRO",
        }
    }

    pub fn from_key(key: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.key() == key)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    #[serde(default = "all_metrics")]
    pub requested: Vec<MetricName>,
    #[serde(default = "default_pro_limit")]
    pub pro_limit: f64,
    #[serde(default = "default_spro_limit")]
    pub spro_limit: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            requested: all_metrics(),
            pro_limit: DEFAULT_PRO_LIMIT,
            spro_limit: DEFAULT_SPRO_LIMIT,
        }
    }
}

fn one() -> usize {
    1
}

fn default_supervised_n() -> usize {
    DEFAULT_SUPERVISED_N
}

fn default_coreset() -> Option<CoresetBudget> {
    Some(CoresetBudget::Fraction(0.1))
}

fn default_sigma() -> f64 {
    4.0
}

fn default_pro_limit() -> f64 {
    DEFAULT_PRO_LIMIT
}

fn default_spro_limit() -> f64 {
    DEFAULT_SPRO_LIMIT
}

fn all_metrics() -> Vec<MetricName> {
    MetricName::ALL.to_vec()
}

fn config_error(path: impl Into<String>, message: impl Into<String>) -> RunnerError {
    RunnerError::Config {
        path: path.into(),
        message: message.into(),
    }
}

/// Parses and validates a config document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, RunnerError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        config_error(
            if path == "." { String::new() } else { path },
            e.into_inner().to_string(),
        )
    })?;
    cfg.validate()?;
    Ok(cfg)
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), RunnerError> {
        if self.schema != SCHEMA_VERSION {
            return Err(config_error(
                "schema",
                format!(
                    "unsupported schema {}, expected {SCHEMA_VERSION}",
                    self.schema
                ),
            ));
        }
        if self.dataset.path.is_some() && self.dataset.synthetic.is_some() {
            return Err(config_error(
                "dataset",
                "give either `path` or `synthetic`, not both",
            ));
        }
        if let Some(spec) = &self.dataset.synthetic {
            spec.validate()
                .map_err(|e| config_error("dataset.synthetic", e.to_string()))?;
        } else if self.dataset.seed.is_some() {
            return Err(config_error(
                "dataset.seed",
                "only meaningful with `synthetic`",
            ));
        }
        for (i, c) in self.categories.iter().enumerate() {
            if self.categories[..i].contains(c) {
                return Err(config_error(
                    format!("categories[{i}]"),
                    format!("duplicate category {c}"),
                ));
            }
        }
        if self.setting.is_empty() {
            return Err(config_error("setting", "at least one setting is required"));
        }
        for (i, s) in self.setting.iter().enumerate() {
            validate_setting(s, i)?;
        }
        self.validate_detector()?;
        self.validate_metrics()
    }

    fn validate_detector(&self) -> Result<(), RunnerError> {
        let d = &self.detector;
        d.feature
            .validate()
            .map_err(|e| config_error("detector.feature", e.to_string()))?;
        if d.b == 0 {
            return Err(config_error("detector.b", "must be at least 1"));
        }
        match d.coreset {
            Some(CoresetBudget::Fraction(f)) if !(f > 0.0 && f <= 1.0) => {
                return Err(config_error(
                    "detector.coreset.fraction",
                    format!("{f} outside (0, 1]"),
                ));
            }
            Some(CoresetBudget::Count(0)) => {
                return Err(config_error("detector.coreset.count", "must be at least 1"));
            }
            _ => {}
        }
        if let Some(p) = d.projection_dim {
            let dim = d.feature.patch_size * d.feature.patch_size;
            if p == 0 || p > dim {
                return Err(config_error(
                    "detector.projection_dim",
                    format!("{p} outside [1, {dim}] (descriptor dimension)"),
                ));
            }
        }
        if !d.smoothing_sigma.is_finite() || d.smoothing_sigma < 0.0 {
            return Err(config_error(
                "detector.smoothing_sigma",
                "must be finite and >= 0",
            ));
        }
        Ok(())
    }

    fn validate_metrics(&self) -> Result<(), RunnerError> {
        let m = &self.metrics;
        if m.requested.is_empty() {
            return Err(config_error(
                "metrics.requested",
                "at least one metric is required",
            ));
        }
        for (key, v) in [
            ("metrics.pro_limit", m.pro_limit),
            ("metrics.spro_limit", m.spro_limit),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(config_error(key, format!("{v} outside (0, 1]")));
            }
        }
        Ok(())
    }

    /// Requested metrics in canonical column order, deduplicated.
    pub fn requested_metrics(&self) -> Vec<MetricName> {
        MetricName::ALL
            .into_iter()
            .filter(|m| self.metrics.requested.contains(m))
            .collect()
    }

    /// Canonical JSON value hashed into results: sorted keys, defaults
    /// filled in, `output_dir` removed.
    pub fn canonical_value(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("output_dir");
        }
        v
    }
}

fn validate_setting(s: &SettingEntry, i: usize) -> Result<(), RunnerError> {
    let at = |key: &str| format!("setting[{i}].{key}");
    match s {
        SettingEntry::Unsupervised => Ok(()),
        SettingEntry::Supervised { n } => {
            if *n == 0 {
                return Err(config_error(at("n"), "must be at least 1"));
            }
            Ok(())
        }
        SettingEntry::Fewshot {
            m,
            rotation_k,
            allow_off_grid,
        } => {
            let sc = SettingConfig {
                m: Some(*m),
                allow_off_grid: *allow_off_grid,
                ..SettingConfig::default()
            };
            sc.validate()
                .map_err(|e| config_error(at("m"), e.to_string()))?;
            if ![1, 2, 4].contains(rotation_k) {
                return Err(config_error(
                    at("rotation_k"),
                    format!("{rotation_k} not in {{1, 2, 4}}"),
                ));
            }
            Ok(())
        }
        SettingEntry::Noisy {
            noise_ratios,
            allow_off_grid,
        } => {
            if noise_ratios.is_empty() {
                return Err(config_error(
                    at("noise_ratios"),
                    "at least one ratio is required",
                ));
            }
            for (j, r) in noise_ratios.iter().enumerate() {
                let sc = SettingConfig {
                    noise_ratio: Some(*r),
                    allow_off_grid: *allow_off_grid,
                    ..SettingConfig::default()
                };
                sc.validate().map_err(|e| {
                    config_error(format!("setting[{i}].noise_ratios[{j}]"), e.to_string())
                })?;
            }
            Ok(())
        }
        SettingEntry::Continual { order } => {
            for (j, c) in order.iter().enumerate() {
                if order[..j].contains(c) {
                    return Err(config_error(
                        format!("setting[{i}].order[{j}]"),
                        format!("duplicate category {c}"),
                    ));
                }
            }
            if order.len() == 1 {
                return Err(config_error(at("order"), "needs at least 2 categories"));
            }
            Ok(())
        }
    }
}

/// SHA-256 (hex) of the canonical config.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    hash_value(&cfg.canonical_value())
}

pub(crate) fn hash_value(v: &serde_json::Value) -> String {
    let digest = Sha256::digest(v.to_string().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// First eight bytes of the hash, the root of every per-cell seed.
pub fn hash_seed(hash: &str) -> u64 {
    u64::from_str_radix(&hash[..16], 16).expect("hash is hex")
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str =
        r#"{"schema": 1, "setting": [{"type": "unsupervised"}], "output_dir": "out"}"#;

    fn with(patch: &str) -> String {
        let mut v: serde_json::Value = serde_json::from_str(MINIMAL).unwrap();
        let p: serde_json::Value = serde_json::from_str(patch).unwrap();
        for (k, x) in p.as_object().unwrap() {
            v[k] = x.clone();
        }
        v.to_string()
    }

    fn err_path(text: &str) -> String {
        match parse_config(text) {
            Err(RunnerError::Config { path, .. }) => path,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn defaults_fill_in() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.detector.b, 1);
        assert_eq!(c.detector.smoothing_sigma, 4.0);
        assert_eq!(c.metrics.pro_limit, 0.3);
        assert_eq!(c.requested_metrics().len(), 6);
    }

    #[test]
    fn errors_name_the_key_path() {
        assert_eq!(err_path(&with(r#"{"detector": {"b": 0}}"#)), "detector.b");
        assert_eq!(err_path(&with(r#"{"detector": {"b": -1}}"#)), "detector.b");
        assert_eq!(err_path(&with(r#"{"bogus": 1}"#)), "bogus");
        assert_eq!(
            err_path(&with(r#"{"detector": {"bogus": 1}}"#)),
            "detector.bogus"
        );
        assert_eq!(err_path(&with(r#"{"schema": 2}"#)), "schema");
        assert_eq!(
            err_path(&with(
                r#"{"setting": [{"type": "unsupervised"}, {"type": "fewshot", "m": 3}]}"#
            )),
            "setting[1].m"
        );
        assert_eq!(
            err_path(&with(
                r#"{"setting": [{"type": "noisy", "noise_ratios": [0.05, 0.07]}]}"#
            )),
            "setting[0].noise_ratios[1]"
        );
        assert_eq!(
            err_path(&with(r#"{"metrics": {"pro_limit": 0}}"#)),
            "metrics.pro_limit"
        );
        assert_eq!(
            err_path(&with(r#"{"detector": {"coreset": {"fraction": 2.0}}}"#)),
            "detector.coreset.fraction"
        );
        assert_eq!(
            err_path(&with(r#"{"detector": {"projection_dim": 65}}"#)),
            "detector.projection_dim"
        );
    }

    #[test]
    fn hash_ignores_output_dir_and_key_order() {
        let a = parse_config(MINIMAL).unwrap();
        let b = parse_config(
            r#"{"output_dir": "elsewhere", "setting": [{"type": "unsupervised"}], "schema": 1}"#,
        )
        .unwrap();
        assert_eq!(config_hash(&a), config_hash(&b));
        let c = parse_config(&with(r#"{"seed": 1}"#)).unwrap();
        assert_ne!(config_hash(&a), config_hash(&c));
        assert_eq!(config_hash(&a).len(), 64);
    }
}
