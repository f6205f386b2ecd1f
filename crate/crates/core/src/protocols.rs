//! Evaluation settings as deterministic split transformations.
//!
//! Every sample that leaves its original split, is held out, or is
//! augmented gets a [`MoveRecord`], so a split can always be reconciled
//! against the dataset it came from (see [`Split::verify_conservation`]).

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, DatasetError, Label, Sample};
use crate::rng::SplitMix64;

pub const FEWSHOT_SHOTS: [usize; 4] = [1, 2, 4, 8];
pub const NOISE_RATIOS: [f64; 4] = [0.05, 0.10, 0.15, 0.20];
pub const DEFAULT_SUPERVISED_N: usize = 10;
/// At most three quarters of the test abnormals may be injected as noise.
const NOISE_CAP_NUM: usize = 3;
const NOISE_CAP_DEN: usize = 4;

#[derive(Debug, Error, PartialEq)]
pub enum ProtocolError {
    #[error("unknown category {0}")]
    UnknownCategory(String),
    #[error("category {0} has no normal training samples")]
    EmptyTrain(String),
    #[error("need {needed} abnormal test samples, found {available}")]
    InsufficientAbnormals { needed: usize, available: usize },
    #[error("need {needed} normal training samples, found {available}")]
    InsufficientNormals { needed: usize, available: usize },
    #[error("few-shot m must be one of 1, 2, 4, 8 (got {0})")]
    InvalidShots(usize),
    #[error("rotation_k must be 1, 2 or 4 (got {0})")]
    InvalidRotationK(usize),
    #[error("sample {id} is {height}x{width}; rotation needs square images")]
    NonSquareImage {
        id: String,
        height: usize,
        width: usize,
    },
    #[error("noise ratio must lie in (0, 1), got {0}")]
    InvalidNoiseRatio(f64),
    #[error("no abnormal test samples available for noise injection")]
    NoAbnormals,
    #[error(
        "noise ratio {ratio} with {normals} normals and {abnormals} abnormals injects nothing"
    )]
    ZeroInjection {
        ratio: f64,
        normals: usize,
        abnormals: usize,
    },
    #[error("category {0} appears twice in the task order")]
    DuplicateCategory(String),
    #[error("continual runs need at least 2 categories, got {0}")]
    TooFewCategories(usize),
    #[error("supervised n must be >= 1")]
    InvalidSupervisedN,
    #[error("conservation violated: {0}")]
    ConservationViolated(String),
    #[error("dataset error: {0}")]
    Data(String),
}

impl From<DatasetError> for ProtocolError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::UnknownCategory(c) => ProtocolError::UnknownCategory(c),
            other => ProtocolError::Data(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Setting {
    Unsupervised,
    Supervised,
    Fewshot,
    Noisy,
    ContinualStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Transform {
    /// Abnormal test sample moved into train with its true label.
    SupervisedDraw,
    /// Normal training sample not drawn into a few-shot train set.
    FewshotExcluded,
    /// Abnormal test sample moved into train, observed as normal.
    NoiseInjection {
        requested_ratio: f64,
        achieved_ratio: f64,
    },
    /// Rotated copy of a training sample.
    Rotation { degrees: u32, source_id: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoveRecord {
    pub sample_id: String,
    pub origin_split: Origin,
    pub true_label: Label,
    /// `None` when the sample is not part of the resulting train set.
    pub observed_label: Option<Label>,
    pub transform: Transform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub sample: Sample,
    pub observed: Label,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub setting: Setting,
    pub category: String,
    pub train: Vec<TrainSample>,
    pub test: Vec<Sample>,
    pub provenance: Vec<MoveRecord>,
}

impl Split {
    /// Samples whose observed label is normal; what an unsupervised
    /// detector is allowed to train on.
    pub fn observed_normals(&self) -> impl Iterator<Item = &Sample> {
        self.train
            .iter()
            .filter(|t| t.observed == Label::Normal)
            .map(|t| &t.sample)
    }

    /// Achieved noise ratio recorded by [`inject_noise`], if any.
    pub fn achieved_noise_ratio(&self) -> Option<f64> {
        self.provenance.iter().find_map(|r| match r.transform {
            Transform::NoiseInjection { achieved_ratio, .. } => Some(achieved_ratio),
            _ => None,
        })
    }

    /// Checks that `train ∪ test ∪ held-out` reproduces the original
    /// category exactly, up to rotated copies, and that the label-purity
    /// rules of the setting hold.
    pub fn verify_conservation(
        &self,
        original_train: &[Sample],
        original_test: &[Sample],
    ) -> Result<(), ProtocolError> {
        let fail = |m: String| Err(ProtocolError::ConservationViolated(m));
        let mut expected: BTreeMap<(Origin, String, Label), usize> = BTreeMap::new();
        for s in original_train {
            *expected
                .entry((Origin::Train, s.id.clone(), s.label))
                .or_default() += 1;
        }
        for s in original_test {
            *expected
                .entry((Origin::Test, s.id.clone(), s.label))
                .or_default() += 1;
        }

        let mut rotation_source: BTreeMap<&str, &str> = BTreeMap::new();
        let mut moved_from_test: BTreeSet<&str> = BTreeSet::new();
        let mut injected: BTreeSet<&str> = BTreeSet::new();
        let mut observed: BTreeMap<(Origin, String, Label), usize> = BTreeMap::new();
        for r in &self.provenance {
            match &r.transform {
                Transform::Rotation { source_id, .. } => {
                    rotation_source.insert(&r.sample_id, source_id);
                }
                Transform::SupervisedDraw => {
                    moved_from_test.insert(&r.sample_id);
                }
                Transform::NoiseInjection { .. } => {
                    moved_from_test.insert(&r.sample_id);
                    injected.insert(&r.sample_id);
                }
                Transform::FewshotExcluded => {
                    *observed
                        .entry((r.origin_split, r.sample_id.clone(), r.true_label))
                        .or_default() += 1;
                }
            }
        }

        let mut train_sources: BTreeSet<(Origin, String, Label)> = BTreeSet::new();
        let mut copies: BTreeMap<String, usize> = BTreeMap::new();
        for t in &self.train {
            let id = t.sample.id.as_str();
            let source = rotation_source.get(id).copied().unwrap_or(id);
            // Only abnormal samples are ever moved in from the test split.
            let origin = if t.sample.label.is_abnormal() && moved_from_test.contains(source) {
                Origin::Test
            } else {
                Origin::Train
            };
            train_sources.insert((origin, source.to_string(), t.sample.label));
            *copies.entry(source.to_string()).or_default() += 1;
        }
        let per_source: BTreeSet<usize> = copies.values().copied().collect();
        if per_source.len() > 1 {
            return fail(format!("uneven augmentation copy counts {per_source:?}"));
        }
        for key in train_sources {
            *observed.entry(key).or_default() += 1;
        }
        for s in &self.test {
            if injected.contains(s.id.as_str()) {
                return fail(format!("injected sample {} is still in test", s.id));
            }
            *observed
                .entry((Origin::Test, s.id.clone(), s.label))
                .or_default() += 1;
        }
        if observed != expected {
            let missing: Vec<_> = expected
                .keys()
                .filter(|k| !observed.contains_key(*k))
                .collect();
            let extra: Vec<_> = observed
                .keys()
                .filter(|k| !expected.contains_key(*k))
                .collect();
            return fail(format!("missing {missing:?}, unexpected {extra:?}"));
        }

        match self.setting {
            Setting::Unsupervised | Setting::Fewshot | Setting::ContinualStep => {
                if let Some(t) = self
                    .train
                    .iter()
                    .find(|t| t.observed != Label::Normal || t.sample.label != Label::Normal)
                {
                    return fail(format!(
                        "abnormal sample {} in a clean train set",
                        t.sample.id
                    ));
                }
            }
            Setting::Noisy => {
                let abnormal: BTreeSet<&str> = self
                    .train
                    .iter()
                    .filter(|t| t.sample.label == Label::Abnormal)
                    .map(|t| t.sample.id.as_str())
                    .collect();
                if abnormal != injected {
                    return fail("train abnormals differ from the recorded injections".into());
                }
                if self.train.iter().any(|t| t.observed != Label::Normal) {
                    return fail("noisy train set has a non-normal observed label".into());
                }
            }
            Setting::Supervised => {}
        }
        Ok(())
    }
}

fn normal_train(dataset: &Dataset, category: &str) -> Result<Vec<TrainSample>, ProtocolError> {
    let train: Vec<TrainSample> = dataset
        .train_of(category)?
        .iter()
        .filter(|s| s.label == Label::Normal)
        .map(|s| TrainSample {
            sample: s.clone(),
            observed: Label::Normal,
        })
        .collect();
    if train.is_empty() {
        return Err(ProtocolError::EmptyTrain(category.to_string()));
    }
    Ok(train)
}

/// Unsupervised: all normal training samples, full test set.
pub fn make_unsupervised(dataset: &Dataset, category: &str) -> Result<Split, ProtocolError> {
    let train = normal_train(dataset, category)?;
    Ok(Split {
        setting: Setting::Unsupervised,
        category: category.to_string(),
        train,
        test: dataset.test_of(category)?.to_vec(),
        provenance: Vec::new(),
    })
}

/// Moves `k` uniformly drawn abnormal test samples into train.
fn draw_abnormals(
    test: Vec<Sample>,
    k: usize,
    seed: u64,
) -> Result<(Vec<Sample>, Vec<Sample>), ProtocolError> {
    let abnormal_idx: Vec<usize> = (0..test.len())
        .filter(|&i| test[i].label.is_abnormal())
        .collect();
    if abnormal_idx.len() < k {
        return Err(ProtocolError::InsufficientAbnormals {
            needed: k,
            available: abnormal_idx.len(),
        });
    }
    let mut rng = SplitMix64::new(seed);
    let picked: BTreeSet<usize> = rng
        .sample_indices(abnormal_idx.len(), k)
        .into_iter()
        .map(|j| abnormal_idx[j])
        .collect();
    let (mut drawn, mut kept) = (Vec::with_capacity(k), Vec::with_capacity(test.len() - k));
    for (i, s) in test.into_iter().enumerate() {
        if picked.contains(&i) {
            drawn.push(s);
        } else {
            kept.push(s);
        }
    }
    Ok((drawn, kept))
}

/// Supervised: `n` abnormal test samples join the training set with their
/// labels and masks. `n = 0` reduces to the unsupervised split.
pub fn make_supervised(
    dataset: &Dataset,
    category: &str,
    n: usize,
    seed: u64,
) -> Result<Split, ProtocolError> {
    let mut split = make_unsupervised(dataset, category)?;
    if n == 0 {
        return Ok(split);
    }
    let (drawn, kept) = draw_abnormals(std::mem::take(&mut split.test), n, seed)?;
    for s in drawn {
        split.provenance.push(MoveRecord {
            sample_id: s.id.clone(),
            origin_split: Origin::Test,
            true_label: s.label,
            observed_label: Some(Label::Abnormal),
            transform: Transform::SupervisedDraw,
        });
        split.train.push(TrainSample {
            sample: s,
            observed: Label::Abnormal,
        });
    }
    split.test = kept;
    split.setting = Setting::Supervised;
    Ok(split)
}

/// Few-shot with the shot count restricted to {1, 2, 4, 8}.
pub fn make_fewshot(
    dataset: &Dataset,
    category: &str,
    m: usize,
    seed: u64,
) -> Result<Split, ProtocolError> {
    if !FEWSHOT_SHOTS.contains(&m) {
        return Err(ProtocolError::InvalidShots(m));
    }
    make_fewshot_any(dataset, category, m, seed)
}

/// Few-shot for any `m >= 1`.
pub fn make_fewshot_any(
    dataset: &Dataset,
    category: &str,
    m: usize,
    seed: u64,
) -> Result<Split, ProtocolError> {
    if m == 0 {
        return Err(ProtocolError::InvalidShots(m));
    }
    let pool = normal_train(dataset, category)?;
    if pool.len() < m {
        return Err(ProtocolError::InsufficientNormals {
            needed: m,
            available: pool.len(),
        });
    }
    let mut rng = SplitMix64::new(seed);
    let picked: BTreeSet<usize> = rng.sample_indices(pool.len(), m).into_iter().collect();
    let mut train = Vec::with_capacity(m);
    let mut provenance = Vec::new();
    for (i, t) in pool.into_iter().enumerate() {
        if picked.contains(&i) {
            train.push(t);
        } else {
            provenance.push(MoveRecord {
                sample_id: t.sample.id.clone(),
                origin_split: Origin::Train,
                true_label: t.sample.label,
                observed_label: None,
                transform: Transform::FewshotExcluded,
            });
        }
    }
    Ok(Split {
        setting: Setting::Fewshot,
        category: category.to_string(),
        train,
        test: dataset.test_of(category)?.to_vec(),
        provenance,
    })
}

/// Derived id of a rotated copy; the 0° copy keeps the source id.
pub fn rotated_id(id: &str, degrees: u32) -> String {
    if degrees == 0 {
        id.to_string()
    } else {
        format!("{id}@rot{degrees}")
    }
}

/// Replaces every train sample by `rotation_k` copies at multiples of
/// `360° / rotation_k`. Masks rotate with their images.
pub fn augment_rotations(split: &Split, rotation_k: usize) -> Result<Split, ProtocolError> {
    let turns: &[u32] = match rotation_k {
        1 => return Ok(split.clone()),
        2 => &[0, 2],
        4 => &[0, 1, 2, 3],
        k => return Err(ProtocolError::InvalidRotationK(k)),
    };
    if let Some(t) = split
        .train
        .iter()
        .find(|t| t.sample.image.height() != t.sample.image.width())
    {
        return Err(ProtocolError::NonSquareImage {
            id: t.sample.id.clone(),
            height: t.sample.image.height(),
            width: t.sample.image.width(),
        });
    }
    let mut out = split.clone();
    out.train.clear();
    for t in &split.train {
        for &q in turns {
            let degrees = q * 90;
            let mut s = t.sample.clone();
            s.id = rotated_id(&t.sample.id, degrees);
            s.image = s.image.rotate90(q);
            s.mask = s.mask.map(|m| m.rotate90(q));
            out.provenance.push(MoveRecord {
                sample_id: s.id.clone(),
                origin_split: Origin::Train,
                true_label: s.label,
                observed_label: Some(t.observed),
                transform: Transform::Rotation {
                    degrees,
                    source_id: t.sample.id.clone(),
                },
            });
            out.train.push(TrainSample {
                sample: s,
                observed: t.observed,
            });
        }
    }
    Ok(out)
}

/// Number of abnormal samples to inject so that they form `ratio` of the
/// training set: `round(ratio·m / (1 − ratio))`, half rounded up, capped at
/// three quarters of the available abnormals.
pub fn noise_injection_count(ratio: f64, normals: usize, abnormals: usize) -> (usize, usize) {
    let uncapped = (ratio * normals as f64 / (1.0 - ratio) + 0.5).floor() as usize;
    let cap = abnormals * NOISE_CAP_NUM / NOISE_CAP_DEN;
    (uncapped, uncapped.min(cap))
}

/// Noisy: abnormal test samples enter train observed as normal and
/// leave the test set.
pub fn inject_noise(
    dataset: &Dataset,
    category: &str,
    noise_ratio: f64,
    seed: u64,
) -> Result<Split, ProtocolError> {
    if !(noise_ratio > 0.0 && noise_ratio < 1.0) {
        return Err(ProtocolError::InvalidNoiseRatio(noise_ratio));
    }
    let mut split = make_unsupervised(dataset, category)?;
    let normals = split.train.len();
    let abnormals = split.test.iter().filter(|s| s.label.is_abnormal()).count();
    if abnormals == 0 {
        return Err(ProtocolError::NoAbnormals);
    }
    let (_, n) = noise_injection_count(noise_ratio, normals, abnormals);
    if n == 0 {
        return Err(ProtocolError::ZeroInjection {
            ratio: noise_ratio,
            normals,
            abnormals,
        });
    }
    let achieved = n as f64 / (normals + n) as f64;
    let (drawn, kept) = draw_abnormals(std::mem::take(&mut split.test), n, seed)?;
    for s in drawn {
        split.provenance.push(MoveRecord {
            sample_id: s.id.clone(),
            origin_split: Origin::Test,
            true_label: s.label,
            observed_label: Some(Label::Normal),
            transform: Transform::NoiseInjection {
                requested_ratio: noise_ratio,
                achieved_ratio: achieved,
            },
        });
        split.train.push(TrainSample {
            sample: s,
            observed: Label::Normal,
        });
    }
    split.test = kept;
    split.setting = Setting::Noisy;
    Ok(split)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    /// 1-based position in the sequence.
    pub index: usize,
    pub category: String,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSequence {
    pub tasks: Vec<Task>,
    pub seed: u64,
}

impl TaskSequence {
    /// Per-category test sets evaluated after training step `step` (1-based):
    /// the tests of tasks `1..=step`, kept separate.
    pub fn eval_sets(&self, step: usize) -> Vec<(&str, &[Sample])> {
        self.tasks[..step.min(self.tasks.len())]
            .iter()
            .map(|t| (t.category.as_str(), t.split.test.as_slice()))
            .collect()
    }
}

/// Continual: one unsupervised task per category, trained in order.
pub fn make_continual(
    dataset: &Dataset,
    category_order: &[String],
    seed: u64,
) -> Result<TaskSequence, ProtocolError> {
    let mut seen = BTreeSet::new();
    for c in category_order {
        if !seen.insert(c.as_str()) {
            return Err(ProtocolError::DuplicateCategory(c.clone()));
        }
    }
    if category_order.len() < 2 {
        return Err(ProtocolError::TooFewCategories(category_order.len()));
    }
    let tasks = category_order
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let mut split = make_unsupervised(dataset, c)?;
            split.setting = Setting::ContinualStep;
            Ok(Task {
                index: i + 1,
                category: c.clone(),
                split,
            })
        })
        .collect::<Result<Vec<_>, ProtocolError>>()?;
    Ok(TaskSequence { tasks, seed })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SettingConfig {
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub noise_ratio: Option<f64>,
    #[serde(default)]
    pub rotation_k: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    /// Lifts the {1,2,4,8} and noise-grid restrictions.
    #[serde(default)]
    pub allow_off_grid: bool,
}

impl SettingConfig {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        if let Some(m) = self.m {
            if m == 0 || (!self.allow_off_grid && !FEWSHOT_SHOTS.contains(&m)) {
                return Err(ProtocolError::InvalidShots(m));
            }
        }
        if self.n == Some(0) {
            return Err(ProtocolError::InvalidSupervisedN);
        }
        if let Some(r) = self.noise_ratio {
            let on_grid = NOISE_RATIOS.iter().any(|g| (g - r).abs() < 1e-12);
            if !(r > 0.0 && r < 1.0) || (!self.allow_off_grid && !on_grid) {
                return Err(ProtocolError::InvalidNoiseRatio(r));
            }
        }
        if let Some(k) = self.rotation_k {
            if ![1, 2, 4].contains(&k) {
                return Err(ProtocolError::InvalidRotationK(k));
            }
        }
        Ok(())
    }
}
