use std::collections::VecDeque;

use super::MetricError;
use crate::image::PixelMask;

/// Saturation threshold for a region: an absolute pixel count, or an area
/// relative to the whole image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Saturation {
    Pixels(f64),
    Relative(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    /// Flat row-major pixel indices, ascending.
    pub pixels: Vec<usize>,
    /// Pixel count at which the region's overlap saturates, in [1, |A|].
    pub saturation: f64,
}

impl Region {
    pub fn area(&self) -> usize {
        self.pixels.len()
    }
}

/// Disjoint ground-truth regions of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionSet {
    height: usize,
    width: usize,
    regions: Vec<Region>,
}

impl RegionSet {
    /// Validates disjointness and bounds; saturations are clamped to [1, |A|].
    pub fn new(height: usize, width: usize, mut regions: Vec<Region>) -> Result<Self, MetricError> {
        let mut owner = vec![false; height * width];
        for r in &mut regions {
            if r.pixels.is_empty() {
                return Err(MetricError::InvalidInput("empty region".into()));
            }
            for &p in &r.pixels {
                if p >= owner.len() {
                    return Err(MetricError::InvalidInput(format!(
                        "pixel {p} outside image"
                    )));
                }
                if std::mem::replace(&mut owner[p], true) {
                    return Err(MetricError::InvalidInput(format!(
                        "pixel {p} in two regions"
                    )));
                }
            }
            if !r.saturation.is_finite() {
                return Err(MetricError::InvalidInput("non-finite saturation".into()));
            }
            r.saturation = r.saturation.clamp(1.0, r.area() as f64);
        }
        Ok(Self {
            height,
            width,
            regions,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    /// Per-pixel region index, `None` for normal pixels.
    pub fn labels(&self) -> Vec<Option<usize>> {
        let mut out = vec![None; self.height * self.width];
        for (i, r) in self.regions.iter().enumerate() {
            for &p in &r.pixels {
                out[p] = Some(i);
            }
        }
        out
    }
}

/// Labels 8-connected components of the mask in row-major discovery order.
///
/// Without a saturation every region saturates at its own area.
pub fn connected_regions(mask: &PixelMask, saturation: Option<Saturation>) -> RegionSet {
    let (h, w) = (mask.height(), mask.width());
    let bits = mask.bits();
    let mut seen = vec![false; h * w];
    let mut regions = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..h * w {
        if !bits[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut pixels = Vec::new();
        while let Some(p) = queue.pop_front() {
            pixels.push(p);
            let (r, c) = ((p / w) as isize, (p % w) as isize);
            for dr in -1..=1 {
                for dc in -1..=1 {
                    let (nr, nc) = (r + dr, c + dc);
                    if nr < 0 || nc < 0 || nr >= h as isize || nc >= w as isize {
                        continue;
                    }
                    let q = nr as usize * w + nc as usize;
                    if bits[q] && !seen[q] {
                        seen[q] = true;
                        queue.push_back(q);
                    }
                }
            }
        }
        pixels.sort_unstable();
        let area = pixels.len() as f64;
        let s = match saturation {
            None => area,
            Some(Saturation::Pixels(n)) => n,
            Some(Saturation::Relative(a)) => a * (h * w) as f64,
        };
        regions.push(Region {
            pixels,
            saturation: s.clamp(1.0, area),
        });
    }
    RegionSet {
        height: h,
        width: w,
        regions,
    }
}
