//! Samples, datasets and the on-disk directory layout.
//!
//! Layout (read and written):
//!
//! ```text
//! <root>/<category>/train/good/<id>.pgm
//! <root>/<category>/test/<defect_type>/<id>.pgm
//! <root>/<category>/ground_truth/<defect_type>/<id>_mask.pgm
//! <root>/<category>/saturations.json        (optional)
//! ```
//!
//! Train samples are identified by file stem; test samples by
//! `<defect_type>/<stem>`, since stems repeat across defect folders.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::{ImageError, ImageGrid, PixelMask};

pub const GOOD: &str = "good";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("abnormal test image {image} has no ground-truth mask at {expected}")]
    MissingMask { image: PathBuf, expected: PathBuf },
    #[error("mask {mask} is {mask_h}x{mask_w} but its image is {image_h}x{image_w}")]
    DimMismatch {
        mask: PathBuf,
        mask_h: usize,
        mask_w: usize,
        image_h: usize,
        image_w: usize,
    },
    #[error("malformed image {path}: {reason}")]
    MalformedPgm { path: PathBuf, reason: String },
    #[error("category {0} has no training images")]
    EmptyCategory(String),
    #[error("unknown category {0}")]
    UnknownCategory(String),
    #[error("abnormal sample {0} has an empty mask")]
    EmptyAbnormalMask(String),
    #[error("invalid saturations file {path}: {reason}")]
    BadSaturations { path: PathBuf, reason: String },
    #[error("duplicate sample id {id} in {split} split of {category}")]
    DuplicateId {
        id: String,
        split: &'static str,
        category: String,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl DatasetError {
    fn from_image(path: &Path, e: ImageError) -> Self {
        match e {
            ImageError::Io { source, .. } => DatasetError::Io {
                path: path.to_path_buf(),
                source,
            },
            other => DatasetError::MalformedPgm {
                path: path.to_path_buf(),
                reason: other.to_string(),
            },
        }
    }

    /// Path of the file that caused the error, when there is one.
    pub fn path(&self) -> Option<&Path> {
        match self {
            DatasetError::MissingMask { image, .. } => Some(image),
            DatasetError::DimMismatch { mask, .. } => Some(mask),
            DatasetError::MalformedPgm { path, .. }
            | DatasetError::BadSaturations { path, .. }
            | DatasetError::Io { path, .. } => Some(path),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Normal,
    Abnormal,
}

impl Label {
    pub fn is_abnormal(self) -> bool {
        self == Label::Abnormal
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub image: ImageGrid,
    pub label: Label,
    pub mask: Option<PixelMask>,
    pub defect_type: String,
    pub category: String,
}

impl Sample {
    pub fn normal(id: impl Into<String>, category: impl Into<String>, image: ImageGrid) -> Self {
        Self {
            id: id.into(),
            image,
            label: Label::Normal,
            mask: None,
            defect_type: GOOD.to_string(),
            category: category.into(),
        }
    }

    /// Builds an abnormal sample; the mask must match the image and be nonempty.
    pub fn abnormal(
        id: impl Into<String>,
        category: impl Into<String>,
        defect_type: impl Into<String>,
        image: ImageGrid,
        mask: PixelMask,
    ) -> Result<Self, DatasetError> {
        let id = id.into();
        if mask.height() != image.height() || mask.width() != image.width() {
            return Err(DatasetError::DimMismatch {
                mask: PathBuf::from(&id),
                mask_h: mask.height(),
                mask_w: mask.width(),
                image_h: image.height(),
                image_w: image.width(),
            });
        }
        if !mask.any() {
            return Err(DatasetError::EmptyAbnormalMask(id));
        }
        Ok(Self {
            id,
            image,
            label: Label::Abnormal,
            mask: Some(mask),
            defect_type: defect_type.into(),
            category: category.into(),
        })
    }

    /// Pixel mask for evaluation: the stored one, or all-false for normals.
    pub fn eval_mask(&self) -> PixelMask {
        match &self.mask {
            Some(m) => m.clone(),
            None => PixelMask::empty(self.image.height(), self.image.width())
                .expect("image dims are nonzero"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub categories: Vec<String>,
    pub train: BTreeMap<String, Vec<Sample>>,
    pub test: BTreeMap<String, Vec<Sample>>,
    /// defect_type → saturation area relative to the image, in (0, 1].
    pub saturation_table: BTreeMap<String, f64>,
}

impl Dataset {
    pub fn train_of(&self, category: &str) -> Result<&[Sample], DatasetError> {
        self.check_category(category)?;
        Ok(self.train.get(category).map(Vec::as_slice).unwrap_or(&[]))
    }

    pub fn test_of(&self, category: &str) -> Result<&[Sample], DatasetError> {
        self.check_category(category)?;
        Ok(self.test.get(category).map(Vec::as_slice).unwrap_or(&[]))
    }

    fn check_category(&self, category: &str) -> Result<(), DatasetError> {
        if self.categories.iter().any(|c| c == category) {
            Ok(())
        } else {
            Err(DatasetError::UnknownCategory(category.to_string()))
        }
    }

    /// Writes the dataset in the directory layout read by [`load_dataset`].
    pub fn write_to(&self, root: &Path) -> Result<(), DatasetError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| DatasetError::Io { path, source }
        };
        for category in &self.categories {
            let cat_dir = root.join(category);
            for (split, samples) in [("train", &self.train), ("test", &self.test)] {
                for s in samples.get(category).into_iter().flatten() {
                    let dir = cat_dir.join(split).join(&s.defect_type);
                    fs::create_dir_all(&dir).map_err(io(&dir))?;
                    let p = dir.join(format!("{}.pgm", file_stem_of(&s.id)));
                    s.image
                        .write_pgm(&p)
                        .map_err(|e| DatasetError::from_image(&p, e))?;
                    if let (Some(mask), Label::Abnormal) = (&s.mask, s.label) {
                        let gt = cat_dir.join("ground_truth").join(&s.defect_type);
                        fs::create_dir_all(&gt).map_err(io(&gt))?;
                        let mp = gt.join(format!("{}_mask.pgm", file_stem_of(&s.id)));
                        mask.write_pgm(&mp)
                            .map_err(|e| DatasetError::from_image(&mp, e))?;
                    }
                }
            }
            if !self.saturation_table.is_empty() {
                let sat: BTreeMap<&str, SaturationEntry> = self
                    .saturation_table
                    .iter()
                    .map(|(k, v)| (k.as_str(), SaturationEntry { relative_area: *v }))
                    .collect();
                let p = cat_dir.join("saturations.json");
                let body = serde_json::to_string_pretty(&sat).expect("map serializes");
                fs::create_dir_all(&cat_dir).map_err(io(&cat_dir))?;
                fs::write(&p, body).map_err(io(&p))?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SaturationEntry {
    relative_area: f64,
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>, DatasetError> {
    let rd = fs::read_dir(dir).map_err(|source| DatasetError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    for e in rd {
        let e = e.map_err(|source| DatasetError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        out.push(e.path());
    }
    out.sort();
    Ok(out)
}

fn pgm_files(dir: &Path) -> Result<Vec<PathBuf>, DatasetError> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    Ok(sorted_entries(dir)?
        .into_iter()
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "pgm"))
        .collect())
}

/// File stem used when writing a sample; the last `/`-separated part of its id.
fn file_stem_of(id: &str) -> &str {
    id.rsplit('/').next().unwrap_or(id)
}

fn stem(p: &Path) -> String {
    p.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn read_image(p: &Path) -> Result<ImageGrid, DatasetError> {
    ImageGrid::read_pgm(p).map_err(|e| DatasetError::from_image(p, e))
}

/// Loads a dataset from the directory layout described in the module docs.
///
/// Categories are the subdirectories of `root` (sorted), optionally
/// restricted to `category_filter`.
pub fn load_dataset(
    root: &Path,
    category_filter: Option<&[String]>,
) -> Result<Dataset, DatasetError> {
    let mut categories = Vec::new();
    for p in sorted_entries(root)? {
        if p.is_dir() {
            categories.push(p.file_name().unwrap().to_string_lossy().into_owned());
        }
    }
    if let Some(filter) = category_filter {
        for c in filter {
            if !categories.contains(c) {
                return Err(DatasetError::UnknownCategory(c.clone()));
            }
        }
        categories.retain(|c| filter.contains(c));
    }

    let mut ds = Dataset {
        categories: categories.clone(),
        train: BTreeMap::new(),
        test: BTreeMap::new(),
        saturation_table: BTreeMap::new(),
    };
    for category in &categories {
        let cat_dir = root.join(category);

        let mut train = Vec::new();
        for p in pgm_files(&cat_dir.join("train").join(GOOD))? {
            train.push(Sample::normal(stem(&p), category, read_image(&p)?));
        }
        if train.is_empty() {
            return Err(DatasetError::EmptyCategory(category.clone()));
        }

        let mut test = Vec::new();
        let test_dir = cat_dir.join("test");
        let defect_dirs = if test_dir.is_dir() {
            sorted_entries(&test_dir)?
        } else {
            Vec::new()
        };
        for d in defect_dirs.into_iter().filter(|d| d.is_dir()) {
            let defect_type = d.file_name().unwrap().to_string_lossy().into_owned();
            for p in pgm_files(&d)? {
                // Stems repeat across defect folders; qualify them.
                let file_stem = stem(&p);
                let id = format!("{defect_type}/{file_stem}");
                let image = read_image(&p)?;
                if defect_type == GOOD {
                    test.push(Sample::normal(id, category, image));
                    continue;
                }
                let mp = cat_dir
                    .join("ground_truth")
                    .join(&defect_type)
                    .join(format!("{file_stem}_mask.pgm"));
                if !mp.is_file() {
                    return Err(DatasetError::MissingMask {
                        image: p,
                        expected: mp,
                    });
                }
                let mask =
                    PixelMask::read_pgm(&mp).map_err(|e| DatasetError::from_image(&mp, e))?;
                if mask.height() != image.height() || mask.width() != image.width() {
                    return Err(DatasetError::DimMismatch {
                        mask: mp,
                        mask_h: mask.height(),
                        mask_w: mask.width(),
                        image_h: image.height(),
                        image_w: image.width(),
                    });
                }
                if !mask.any() {
                    return Err(DatasetError::EmptyAbnormalMask(mp.display().to_string()));
                }
                test.push(Sample {
                    id,
                    image,
                    label: Label::Abnormal,
                    mask: Some(mask),
                    defect_type: defect_type.clone(),
                    category: category.clone(),
                });
            }
        }

        check_unique(&train, "train", category)?;
        check_unique(&test, "test", category)?;

        let sat_path = cat_dir.join("saturations.json");
        if sat_path.is_file() {
            let text = fs::read_to_string(&sat_path).map_err(|source| DatasetError::Io {
                path: sat_path.clone(),
                source,
            })?;
            let parsed: BTreeMap<String, SaturationEntry> =
                serde_json::from_str(&text).map_err(|e| DatasetError::BadSaturations {
                    path: sat_path.clone(),
                    reason: e.to_string(),
                })?;
            for (defect, entry) in parsed {
                let a = entry.relative_area;
                if !(a > 0.0 && a <= 1.0) {
                    return Err(DatasetError::BadSaturations {
                        path: sat_path,
                        reason: format!("relative_area {a} for {defect} outside (0, 1]"),
                    });
                }
                ds.saturation_table.insert(defect, a);
            }
        }

        ds.train.insert(category.clone(), train);
        ds.test.insert(category.clone(), test);
    }
    Ok(ds)
}

fn check_unique(
    samples: &[Sample],
    split: &'static str,
    category: &str,
) -> Result<(), DatasetError> {
    let mut seen = BTreeSet::new();
    for s in samples {
        if !seen.insert(s.id.as_str()) {
            return Err(DatasetError::DuplicateId {
                id: s.id.clone(),
                split,
                category: category.to_string(),
            });
        }
    }
    Ok(())
}
