use std::fs;
use std::path::Path;

use super::DetectorError;
use crate::features::PatchFeatureGrid;

pub const BANK_MAGIC: &[u8; 4] = b"IADB";
pub const BANK_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 + 8;

/// Flat store of patch descriptors, each tagged with the task that added it
/// (0 outside continual runs). Immutable once built; queries only read.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryBank {
    dim: usize,
    data: Vec<f32>,
    task_tags: Vec<u32>,
}

impl MemoryBank {
    /// An empty bank for incremental (continual) construction.
    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            data: Vec::new(),
            task_tags: Vec::new(),
        }
    }

    pub fn from_parts(
        dim: usize,
        data: Vec<f32>,
        task_tags: Vec<u32>,
    ) -> Result<Self, DetectorError> {
        if dim == 0 {
            return Err(DetectorError::InvalidBank("dim must be >= 1".into()));
        }
        if data.len() != task_tags.len() * dim {
            return Err(DetectorError::InvalidBank(format!(
                "{} values for {} vectors of dim {dim}",
                data.len(),
                task_tags.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(DetectorError::InvalidBank("non-finite entry".into()));
        }
        Ok(Self {
            dim,
            data,
            task_tags,
        })
    }

    /// Union of every patch of every grid, in grid order then row-major order.
    pub fn build(grids: &[PatchFeatureGrid]) -> Result<Self, DetectorError> {
        let first = grids.first().ok_or(DetectorError::EmptyInput)?;
        let dim = first.dim();
        let mut data = Vec::with_capacity(grids.iter().map(|g| g.as_flat().len()).sum());
        for g in grids {
            if g.dim() != dim {
                return Err(DetectorError::DimMismatch {
                    expected: dim,
                    actual: g.dim(),
                });
            }
            data.extend_from_slice(g.as_flat());
        }
        let count = data.len() / dim;
        Ok(Self {
            dim,
            data,
            task_tags: vec![0; count],
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.task_tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.task_tags.is_empty()
    }

    pub fn vector(&self, index: usize) -> &[f32] {
        &self.data[index * self.dim..(index + 1) * self.dim]
    }

    pub fn vectors(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn task_tags(&self) -> &[u32] {
        &self.task_tags
    }

    /// Bytes held by descriptor payload: `count × dim × 4`.
    pub fn payload_bytes(&self) -> usize {
        self.data.len() * std::mem::size_of::<f32>()
    }

    /// New bank holding `indices` in the given order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        let mut task_tags = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.vector(i));
            task_tags.push(self.task_tags[i]);
        }
        Self {
            dim: self.dim,
            data,
            task_tags,
        }
    }

    pub(crate) fn append(&mut self, other: &MemoryBank, tag: u32) {
        self.data.extend_from_slice(&other.data);
        self.task_tags.extend(std::iter::repeat_n(tag, other.len()));
    }

    /// `IADB` snapshot: magic, u16 version, u32 dim, u64 count, count u32
    /// task tags, then count·dim f32 values; all little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.len() * 4 + self.payload_bytes());
        out.extend_from_slice(BANK_MAGIC);
        out.extend_from_slice(&BANK_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        for t in &self.task_tags {
            out.extend_from_slice(&t.to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DetectorError> {
        if bytes.len() >= 4 && &bytes[..4] != BANK_MAGIC {
            return Err(DetectorError::BadMagic);
        }
        if bytes.len() < HEADER_LEN {
            return Err(DetectorError::TruncatedFile {
                expected: HEADER_LEN,
                actual: bytes.len(),
            });
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != BANK_VERSION {
            return Err(DetectorError::VersionUnsupported(version));
        }
        let dim = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
        let count = u64::from_le_bytes(bytes[10..18].try_into().unwrap()) as usize;
        let expected = count
            .checked_mul(4 + dim * 4)
            .and_then(|n| n.checked_add(HEADER_LEN))
            .ok_or_else(|| DetectorError::InvalidBank("header size overflows".into()))?;
        if bytes.len() < expected {
            return Err(DetectorError::TruncatedFile {
                expected,
                actual: bytes.len(),
            });
        }
        let tags_end = HEADER_LEN + count * 4;
        let task_tags = bytes[HEADER_LEN..tags_end]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let data = bytes[tags_end..expected]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::from_parts(dim, data, task_tags)
    }

    pub fn write_snapshot(&self, path: &Path) -> Result<(), DetectorError> {
        fs::write(path, self.to_bytes()).map_err(|e| DetectorError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn read_snapshot(path: &Path) -> Result<Self, DetectorError> {
        let bytes = fs::read(path).map_err(|e| DetectorError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(gh: usize, gw: usize, dim: usize, fill: f32) -> PatchFeatureGrid {
        PatchFeatureGrid::new(gh, gw, dim, vec![fill; gh * gw * dim]).unwrap()
    }

    #[test]
    fn build_union() {
        let b = MemoryBank::build(&[grid(2, 2, 3, 0.0), grid(2, 2, 3, 1.0)]).unwrap();
        assert_eq!(b.len(), 8);
        assert_eq!(b.vector(4), &[1.0, 1.0, 1.0]);
        assert!(b.task_tags().iter().all(|t| *t == 0));
        assert_eq!(MemoryBank::build(&[grid(1, 1, 2, 0.0)]).unwrap().len(), 1);
    }

    #[test]
    fn build_errors() {
        assert_eq!(MemoryBank::build(&[]), Err(DetectorError::EmptyInput));
        assert_eq!(
            MemoryBank::build(&[grid(1, 1, 16, 0.0), grid(1, 1, 32, 0.0)]),
            Err(DetectorError::DimMismatch {
                expected: 16,
                actual: 32
            })
        );
    }

    #[test]
    fn snapshot_round_trip_and_payload() {
        let b = MemoryBank::from_parts(2, vec![1.0, -0.0, 3.5, f32::MAX], vec![1, 2]).unwrap();
        let bytes = b.to_bytes();
        let back = MemoryBank::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(bytes.len() - HEADER_LEN - 4 * b.len(), b.payload_bytes());
        assert_eq!(
            MemoryBank::from_bytes(b"XXXXXXXXXXXXXXXXXXXX"),
            Err(DetectorError::BadMagic)
        );
        assert!(matches!(
            MemoryBank::from_bytes(&bytes[..bytes.len() - 1]),
            Err(DetectorError::TruncatedFile { .. })
        ));
    }
}
