//! Patch feature grids, the raw-patch descriptor and the `IADF` file format.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::ImageGrid;

pub const FEATURE_MAGIC: &[u8; 4] = b"IADF";
pub const FEATURE_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 + 4 + 4;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("patch size {patch_size} exceeds image {height}x{width}")]
    PatchTooLarge {
        patch_size: usize,
        height: usize,
        width: usize,
    },
    #[error("invalid feature config: {0}")]
    InvalidConfig(String),
    #[error("invalid feature grid: {0}")]
    InvalidGrid(String),
    #[error("bad magic: expected IADF")]
    BadMagic,
    #[error("truncated feature file: expected {expected} bytes, found {actual}")]
    TruncatedFile { expected: usize, actual: usize },
    #[error("unsupported feature file version {0}")]
    VersionUnsupported(u16),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Descriptor {
    RawPatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureProviderConfig {
    pub patch_size: usize,
    pub stride: usize,
    #[serde(default = "default_descriptor")]
    pub descriptor: Descriptor,
}

fn default_descriptor() -> Descriptor {
    Descriptor::RawPatch
}

impl Default for FeatureProviderConfig {
    fn default() -> Self {
        Self {
            patch_size: 8,
            stride: 4,
            descriptor: Descriptor::RawPatch,
        }
    }
}

impl FeatureProviderConfig {
    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.patch_size == 0 {
            return Err(FeatureError::InvalidConfig(
                "patch_size must be >= 1".into(),
            ));
        }
        if self.stride == 0 || self.stride > self.patch_size {
            return Err(FeatureError::InvalidConfig(format!(
                "stride must be in [1, patch_size={}], got {}",
                self.patch_size, self.stride
            )));
        }
        Ok(())
    }

    /// Number of window positions along an axis of `len` pixels.
    pub fn positions(&self, len: usize) -> usize {
        (len - self.patch_size) / self.stride + 1
    }
}

/// `grid_h × grid_w` descriptors of length `dim`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchFeatureGrid {
    grid_h: usize,
    grid_w: usize,
    dim: usize,
    data: Vec<f32>,
}

impl PatchFeatureGrid {
    pub fn new(
        grid_h: usize,
        grid_w: usize,
        dim: usize,
        data: Vec<f32>,
    ) -> Result<Self, FeatureError> {
        if grid_h == 0 || grid_w == 0 || dim == 0 {
            return Err(FeatureError::InvalidGrid(format!(
                "shape {grid_h}x{grid_w}x{dim} has a zero extent"
            )));
        }
        if data.len() != grid_h * grid_w * dim {
            return Err(FeatureError::InvalidGrid(format!(
                "expected {} values, got {}",
                grid_h * grid_w * dim,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(FeatureError::InvalidGrid("non-finite entry".into()));
        }
        Ok(Self {
            grid_h,
            grid_w,
            dim,
            data,
        })
    }

    pub fn grid_h(&self) -> usize {
        self.grid_h
    }

    pub fn grid_w(&self) -> usize {
        self.grid_w
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.grid_h * self.grid_w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_flat(&self) -> &[f32] {
        &self.data
    }

    pub fn vector(&self, index: usize) -> &[f32] {
        &self.data[index * self.dim..(index + 1) * self.dim]
    }

    pub fn vectors(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    /// Serializes to the `IADF` little-endian layout.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.data.len() * 4);
        out.extend_from_slice(FEATURE_MAGIC);
        out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.grid_h as u32).to_le_bytes());
        out.extend_from_slice(&(self.grid_w as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FeatureError> {
        if bytes.len() < 4 {
            return Err(FeatureError::TruncatedFile {
                expected: HEADER_LEN,
                actual: bytes.len(),
            });
        }
        if &bytes[..4] != FEATURE_MAGIC {
            return Err(FeatureError::BadMagic);
        }
        if bytes.len() < HEADER_LEN {
            return Err(FeatureError::TruncatedFile {
                expected: HEADER_LEN,
                actual: bytes.len(),
            });
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != FEATURE_VERSION {
            return Err(FeatureError::VersionUnsupported(version));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
        let (grid_h, grid_w, dim) = (u32_at(6), u32_at(10), u32_at(14));
        let count = grid_h
            .checked_mul(grid_w)
            .and_then(|n| n.checked_mul(dim))
            .ok_or_else(|| FeatureError::InvalidGrid("header shape overflows".into()))?;
        let expected = HEADER_LEN + count * 4;
        if bytes.len() < expected {
            return Err(FeatureError::TruncatedFile {
                expected,
                actual: bytes.len(),
            });
        }
        let data = bytes[HEADER_LEN..expected]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(grid_h, grid_w, dim, data)
    }
}

/// Slides a `patch_size` window with `stride` over the image and flattens
/// each window into a descriptor of length `patch_size²`.
pub fn extract_features(
    image: &ImageGrid,
    cfg: &FeatureProviderConfig,
) -> Result<PatchFeatureGrid, FeatureError> {
    cfg.validate()?;
    let (h, w, p) = (image.height(), image.width(), cfg.patch_size);
    if p > h || p > w {
        return Err(FeatureError::PatchTooLarge {
            patch_size: p,
            height: h,
            width: w,
        });
    }
    let (gh, gw) = (cfg.positions(h), cfg.positions(w));
    let mut data = Vec::with_capacity(gh * gw * p * p);
    let px = image.values();
    for gr in 0..gh {
        for gc in 0..gw {
            let (top, left) = (gr * cfg.stride, gc * cfg.stride);
            for r in top..top + p {
                data.extend_from_slice(&px[r * w + left..r * w + left + p]);
            }
        }
    }
    PatchFeatureGrid::new(gh, gw, p * p, data)
}

pub fn write_feature_file(grid: &PatchFeatureGrid, path: &Path) -> Result<(), FeatureError> {
    fs::write(path, grid.to_bytes()).map_err(|source| FeatureError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_feature_file(path: &Path) -> Result<PatchFeatureGrid, FeatureError> {
    let bytes = fs::read(path).map_err(|source| FeatureError::Io {
        path: path.display().to_string(),
        source,
    })?;
    PatchFeatureGrid::from_bytes(&bytes)
}
