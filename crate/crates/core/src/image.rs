//! Single-channel images, binary masks and the PGM (P5) codec.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("image dimensions must be at least 1x1, got {height}x{width}")]
    EmptyDims { height: usize, width: usize },
    #[error("expected {expected} values, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("pixel value {value} at index {index} is outside [0, 1]")]
    OutOfRange { index: usize, value: f32 },
    #[error("malformed PGM {path}: {reason}")]
    MalformedPgm { path: String, reason: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Grayscale image with intensities in [0, 1], row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageGrid {
    height: usize,
    width: usize,
    values: Vec<f32>,
}

impl ImageGrid {
    pub fn new(height: usize, width: usize, values: Vec<f32>) -> Result<Self, ImageError> {
        if height == 0 || width == 0 {
            return Err(ImageError::EmptyDims { height, width });
        }
        if values.len() != height * width {
            return Err(ImageError::LengthMismatch {
                expected: height * width,
                actual: values.len(),
            });
        }
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(ImageError::OutOfRange { index, value });
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Result<Self, ImageError> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.values[row * self.width + col]
    }

    /// Rotates counter-clockwise by `quarter_turns` × 90°.
    pub fn rotate90(&self, quarter_turns: u32) -> Self {
        let (h, w, values) = rotate_buffer(self.height, self.width, &self.values, quarter_turns);
        Self {
            height: h,
            width: w,
            values,
        }
    }

    /// Reads a binary PGM; 8-bit value `v` maps to `v / 255`.
    pub fn read_pgm(path: &Path) -> Result<Self, ImageError> {
        let (height, width, bytes) = read_pgm_bytes(path)?;
        let values = bytes.iter().map(|&b| f32::from(b) / 255.0).collect();
        Self::new(height, width, values)
    }

    /// Writes a binary PGM, quantizing to the nearest of 256 levels.
    pub fn write_pgm(&self, path: &Path) -> Result<(), ImageError> {
        let bytes: Vec<u8> = self
            .values
            .iter()
            .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect();
        write_pgm_bytes(path, self.height, self.width, &bytes)
    }
}

/// Binary pixel mask; `true` marks an anomalous pixel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelMask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl PixelMask {
    pub fn new(height: usize, width: usize, bits: Vec<bool>) -> Result<Self, ImageError> {
        if height == 0 || width == 0 {
            return Err(ImageError::EmptyDims { height, width });
        }
        if bits.len() != height * width {
            return Err(ImageError::LengthMismatch {
                expected: height * width,
                actual: bits.len(),
            });
        }
        Ok(Self {
            height,
            width,
            bits,
        })
    }

    pub fn empty(height: usize, width: usize) -> Result<Self, ImageError> {
        Self::new(height, width, vec![false; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.bits[row * self.width + col] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn any(&self) -> bool {
        self.bits.iter().any(|b| *b)
    }

    pub fn rotate90(&self, quarter_turns: u32) -> Self {
        let (h, w, bits) = rotate_buffer(self.height, self.width, &self.bits, quarter_turns);
        Self {
            height: h,
            width: w,
            bits,
        }
    }

    /// Reads a PGM mask; any nonzero pixel is anomalous.
    pub fn read_pgm(path: &Path) -> Result<Self, ImageError> {
        let (height, width, bytes) = read_pgm_bytes(path)?;
        Self::new(height, width, bytes.iter().map(|&b| b > 0).collect())
    }

    pub fn write_pgm(&self, path: &Path) -> Result<(), ImageError> {
        let bytes: Vec<u8> = self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
        write_pgm_bytes(path, self.height, self.width, &bytes)
    }
}

fn rotate_buffer<T: Copy>(
    h: usize,
    w: usize,
    src: &[T],
    quarter_turns: u32,
) -> (usize, usize, Vec<T>) {
    match quarter_turns % 4 {
        0 => (h, w, src.to_vec()),
        // 90° counter-clockwise: out[r][c] = src[c][w-1-r], out is w×h.
        1 => {
            let mut out = Vec::with_capacity(h * w);
            for r in 0..w {
                for c in 0..h {
                    out.push(src[c * w + (w - 1 - r)]);
                }
            }
            (w, h, out)
        }
        2 => {
            let mut out = src.to_vec();
            out.reverse();
            (h, w, out)
        }
        _ => {
            let mut out = Vec::with_capacity(h * w);
            for r in 0..w {
                for c in 0..h {
                    out.push(src[(h - 1 - c) * w + r]);
                }
            }
            (w, h, out)
        }
    }
}

fn malformed(path: &Path, reason: impl Into<String>) -> ImageError {
    ImageError::MalformedPgm {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

/// Parses a P5 file with maxval 255. Header comments (`#`) are skipped.
pub fn read_pgm_bytes(path: &Path) -> Result<(usize, usize, Vec<u8>), ImageError> {
    let data = fs::read(path).map_err(|source| ImageError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_pgm(&data).map_err(|reason| malformed(path, reason))
}

fn parse_pgm(data: &[u8]) -> Result<(usize, usize, Vec<u8>), String> {
    if data.len() < 2 || &data[..2] != b"P5" {
        return Err("missing P5 magic".into());
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        loop {
            match data.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while pos < data.len() && data[pos] != b'\n' {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err("truncated header".into()),
            }
        }
        let start = pos;
        while pos < data.len() && data[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err("expected a decimal header field".into());
        }
        *field = std::str::from_utf8(&data[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or("header field overflow")?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(format!("unsupported maxval {maxval}"));
    }
    if width == 0 || height == 0 {
        return Err("zero dimension".into());
    }
    // Exactly one whitespace byte separates the header from the raster.
    match data.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err("missing raster separator".into()),
    }
    let need = width * height;
    let raster = &data[pos..];
    if raster.len() < need {
        return Err(format!(
            "raster has {} bytes, expected {need}",
            raster.len()
        ));
    }
    Ok((height, width, raster[..need].to_vec()))
}

pub fn write_pgm_bytes(
    path: &Path,
    height: usize,
    width: usize,
    bytes: &[u8],
) -> Result<(), ImageError> {
    let io = |source| ImageError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut f = fs::File::create(path).map_err(io)?;
    write!(f, "P5\n{width} {height}\n255\n").map_err(io)?;
    f.write_all(bytes).map_err(io)?;
    Ok(())
}
