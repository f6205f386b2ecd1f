//! Procedural synthetic datasets.
//!
//! Each category gets its own sinusoidal background texture; normal samples
//! add small per-sample noise; abnormal samples additionally carry one defect
//! (scratch, blob or missing patch) whose footprint is exactly the mask.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, Sample};
use crate::image::{ImageGrid, PixelMask};
use crate::rng::{derive_seed, SplitMix64};

/// Smallest intensity change a defect introduces.
pub const MIN_DEFECT_CONTRAST: f32 = 0.2;

const BACKGROUND_LO: f64 = 0.3;
const BACKGROUND_HI: f64 = 0.7;
const PIXEL_NOISE: f64 = 0.03;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DefectKind {
    Scratch,
    Blob,
    MissingPatch,
}

impl DefectKind {
    pub fn name(self) -> &'static str {
        match self {
            DefectKind::Scratch => "scratch",
            DefectKind::Blob => "blob",
            DefectKind::MissingPatch => "missing-patch",
        }
    }

    /// Saturation area (relative to the image) written for this kind.
    pub fn saturation(self) -> f64 {
        match self {
            DefectKind::Scratch => 0.005,
            DefectKind::Blob => 0.01,
            DefectKind::MissingPatch => 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub categories: usize,
    pub normals_train: usize,
    pub normals_test: usize,
    pub abnormals_test: usize,
    pub image_size: usize,
    pub defect_kinds: Vec<DefectKind>,
}

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidSpec(m.to_string()));
        if self.categories == 0 {
            return bad("categories must be at least 1");
        }
        if self.normals_train == 0 {
            return bad("normals_train must be at least 1");
        }
        if self.image_size < 16 {
            return bad("image_size must be at least 16");
        }
        if self.abnormals_test > 0 && self.defect_kinds.is_empty() {
            return bad("defect_kinds must be nonempty when abnormals_test > 0");
        }
        Ok(())
    }
}

pub fn category_name(index: usize) -> String {
    format!("synth{index:02}")
}

/// Generates a dataset; a pure function of `(spec, seed)`.
pub fn synth_dataset(spec: &SynthSpec, seed: u64) -> Result<Dataset, SynthError> {
    synth_dataset_with_references(spec, seed).map(|(ds, _)| ds)
}

/// Defect-free renders of abnormal test samples keyed by `(category, id)`.
pub type References = BTreeMap<(String, String), ImageGrid>;

/// As [`synth_dataset`], also returning the defect-free render of every
/// abnormal test sample.
pub fn synth_dataset_with_references(
    spec: &SynthSpec,
    seed: u64,
) -> Result<(Dataset, References), SynthError> {
    spec.validate()?;
    let size = spec.image_size;
    let mut ds = Dataset {
        categories: Vec::new(),
        train: BTreeMap::new(),
        test: BTreeMap::new(),
        saturation_table: BTreeMap::new(),
    };
    let mut clean_refs = BTreeMap::new();
    let mut kinds = spec.defect_kinds.clone();
    kinds.sort();
    kinds.dedup();
    if spec.abnormals_test > 0 {
        for k in &kinds {
            ds.saturation_table
                .insert(k.name().to_string(), k.saturation());
        }
    }

    for ci in 0..spec.categories {
        let name = category_name(ci);
        let cat_seed = derive_seed(seed, &format!("category/{ci}"));
        let texture = Texture::new(cat_seed);
        let background = texture.render(size);

        let render_normal = |label: &str| -> Vec<f64> {
            let mut rng = SplitMix64::new(derive_seed(cat_seed, label));
            background
                .iter()
                .map(|v| v + (rng.next_f64() * 2.0 - 1.0) * PIXEL_NOISE)
                .collect()
        };
        let to_grid = |v: &[f64]| {
            ImageGrid::new(size, size, v.iter().map(|x| *x as f32).collect())
                .expect("synthetic values stay in [0, 1]")
        };

        let train = (0..spec.normals_train)
            .map(|i| {
                let id = format!("train_{i:03}");
                Sample::normal(&id, &name, to_grid(&render_normal(&format!("train/{id}"))))
            })
            .collect();

        let mut test = Vec::new();
        for i in 0..spec.normals_test {
            let id = format!("good/{i:03}");
            test.push(Sample::normal(
                &id,
                &name,
                to_grid(&render_normal(&format!("test/{id}"))),
            ));
        }
        for i in 0..spec.abnormals_test {
            let key = format!("defect_{i:03}");
            let clean = render_normal(&format!("test/{key}"));
            let mut rng = SplitMix64::new(derive_seed(cat_seed, &format!("defect/{key}")));
            let kind = kinds[rng.below(kinds.len() as u64) as usize];
            let id = format!("{}/{i:03}", kind.name());
            let footprint = draw_footprint(kind, size, &mut rng);
            let delta = 0.3 + 0.15 * rng.next_f64();
            let mut pixels = clean.clone();
            for (p, &hit) in pixels.iter_mut().zip(&footprint) {
                if !hit {
                    continue;
                }
                *p = match kind {
                    DefectKind::MissingPatch => 0.02,
                    _ if *p < 0.5 => *p + delta,
                    _ => *p - delta,
                };
            }
            let mask = PixelMask::new(size, size, footprint).expect("footprint has image dims");
            let sample = Sample::abnormal(&id, &name, kind.name(), to_grid(&pixels), mask)
                .expect("footprint is nonempty and matches the image");
            clean_refs.insert((name.clone(), id), to_grid(&clean));
            test.push(sample);
        }

        ds.train.insert(name.clone(), train);
        ds.test.insert(name.clone(), test);
        ds.categories.push(name);
    }
    Ok((ds, clean_refs))
}

struct Wave {
    fx: f64,
    fy: f64,
    phase: f64,
    amp: f64,
}

struct Texture {
    waves: Vec<Wave>,
}

impl Texture {
    fn new(seed: u64) -> Self {
        let mut rng = SplitMix64::new(seed);
        let waves = (0..3)
            .map(|_| {
                let freq = 1.0 + rng.below(6) as f64;
                let angle = rng.next_f64() * std::f64::consts::PI;
                Wave {
                    fx: freq * angle.cos(),
                    fy: freq * angle.sin(),
                    phase: rng.next_f64() * std::f64::consts::TAU,
                    amp: 0.5 + rng.next_f64(),
                }
            })
            .collect();
        Self { waves }
    }

    /// Renders the texture rescaled into [BACKGROUND_LO, BACKGROUND_HI].
    fn render(&self, size: usize) -> Vec<f64> {
        let mut raw = Vec::with_capacity(size * size);
        for r in 0..size {
            for c in 0..size {
                let (y, x) = (r as f64 / size as f64, c as f64 / size as f64);
                let v: f64 = self
                    .waves
                    .iter()
                    .map(|w| {
                        w.amp * (std::f64::consts::TAU * (w.fx * x + w.fy * y) + w.phase).sin()
                    })
                    .sum();
                raw.push(v);
            }
        }
        let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = (hi - lo).max(1e-12);
        raw.iter()
            .map(|v| BACKGROUND_LO + (v - lo) / span * (BACKGROUND_HI - BACKGROUND_LO))
            .collect()
    }
}

fn draw_footprint(kind: DefectKind, size: usize, rng: &mut SplitMix64) -> Vec<bool> {
    let s = size as f64;
    let mut fp = vec![false; size * size];
    let cy = s / 8.0 + rng.next_f64() * s * 0.75;
    let cx = s / 8.0 + rng.next_f64() * s * 0.75;
    match kind {
        DefectKind::Blob => {
            let ry = (s / 16.0 + rng.next_f64() * s / 16.0).max(1.5);
            let rx = (s / 16.0 + rng.next_f64() * s / 16.0).max(1.5);
            for r in 0..size {
                for c in 0..size {
                    let dy = (r as f64 + 0.5 - cy) / ry;
                    let dx = (c as f64 + 0.5 - cx) / rx;
                    if dy * dy + dx * dx <= 1.0 {
                        fp[r * size + c] = true;
                    }
                }
            }
        }
        DefectKind::Scratch => {
            let len = s / 4.0 + rng.next_f64() * s / 4.0;
            let angle = rng.next_f64() * std::f64::consts::PI;
            let (dy, dx) = (angle.sin() * len / 2.0, angle.cos() * len / 2.0);
            let (ay, ax, by, bx) = (cy - dy, cx - dx, cy + dy, cx + dx);
            let half_width = 0.75 + 0.5 * rng.next_f64();
            for r in 0..size {
                for c in 0..size {
                    let d = point_segment_distance(r as f64 + 0.5, c as f64 + 0.5, ay, ax, by, bx);
                    if d <= half_width {
                        fp[r * size + c] = true;
                    }
                }
            }
        }
        DefectKind::MissingPatch => {
            let h = (s / 10.0 + rng.next_f64() * s / 10.0).round().max(2.0) as usize;
            let w = (s / 10.0 + rng.next_f64() * s / 10.0).round().max(2.0) as usize;
            let top = (cy as usize).saturating_sub(h / 2).min(size - h);
            let left = (cx as usize).saturating_sub(w / 2).min(size - w);
            for r in top..top + h {
                for c in left..left + w {
                    fp[r * size + c] = true;
                }
            }
        }
    }
    // The defect centre always lies inside the image.
    let (r, c) = ((cy as usize).min(size - 1), (cx as usize).min(size - 1));
    if !fp.iter().any(|b| *b) {
        fp[r * size + c] = true;
    }
    fp
}

fn point_segment_distance(py: f64, px: f64, ay: f64, ax: f64, by: f64, bx: f64) -> f64 {
    let (vy, vx) = (by - ay, bx - ax);
    let len2 = vy * vy + vx * vx;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((py - ay) * vy + (px - ax) * vx) / len2).clamp(0.0, 1.0)
    };
    let (qy, qx) = (ay + t * vy, ax + t * vx);
    ((py - qy).powi(2) + (px - qx).powi(2)).sqrt()
}
