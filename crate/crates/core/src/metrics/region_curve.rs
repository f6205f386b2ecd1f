//! Threshold sweeps for the per-region overlap (PRO) and saturated
//! per-region overlap (sPRO) curves.
//!
//! At threshold `t` the predicted set is every pixel with score `>= t`.
//! Thresholds run over the distinct scores in descending order, starting
//! from the empty prediction at `(0, 0)`. The false-positive rate is pooled
//! over the normal pixels of all images. Curves are integrated by the
//! trapezoid rule up to `fpr_limit`, interpolating linearly at the limit,
//! and normalized by the limit.

use super::{LabeledScores, MetricError, Region, RegionSet};
use crate::image::PixelMask;

pub const DEFAULT_PRO_LIMIT: f64 = 0.3;
pub const DEFAULT_SPRO_LIMIT: f64 = 0.05;

/// Real-valued anomaly map, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl ScoreMap {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self, MetricError> {
        if height == 0 || width == 0 || values.len() != height * width {
            return Err(MetricError::DimMismatch(format!(
                "score map {height}x{width} with {} values",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(MetricError::InvalidInput("non-finite score in map".into()));
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub fpr: f64,
    pub value: f64,
}

fn check_limit(limit: f64) -> Result<(), MetricError> {
    if limit > 0.0 && limit <= 1.0 {
        Ok(())
    } else {
        Err(MetricError::InvalidInput(format!(
            "fpr limit {limit} outside (0, 1]"
        )))
    }
}

fn regions_from_masks(
    maps: &[ScoreMap],
    masks: &[PixelMask],
) -> Result<Vec<RegionSet>, MetricError> {
    if maps.len() != masks.len() {
        return Err(MetricError::DimMismatch(format!(
            "{} maps vs {} masks",
            maps.len(),
            masks.len()
        )));
    }
    Ok(masks
        .iter()
        .map(|m| super::connected_regions(m, None))
        .collect())
}

/// Sweeps thresholds and evaluates `overlap(count, region)` averaged over
/// all regions. Stops after the first point at or beyond `stop_fpr`.
fn sweep(
    maps: &[ScoreMap],
    region_sets: &[RegionSet],
    overlap: impl Fn(usize, &Region) -> f64,
    stop_fpr: f64,
) -> Result<Vec<CurvePoint>, MetricError> {
    if maps.len() != region_sets.len() {
        return Err(MetricError::DimMismatch(format!(
            "{} maps vs {} region sets",
            maps.len(),
            region_sets.len()
        )));
    }
    let mut regions: Vec<&Region> = Vec::new();
    // (score, global region index or usize::MAX for a normal pixel)
    let mut pixels: Vec<(f64, usize)> = Vec::new();
    for (i, (map, rs)) in maps.iter().zip(region_sets).enumerate() {
        if map.height != rs.height() || map.width != rs.width() {
            return Err(MetricError::DimMismatch(format!(
                "image {i}: map {}x{} vs regions {}x{}",
                map.height,
                map.width,
                rs.height(),
                rs.width()
            )));
        }
        let offset = regions.len();
        regions.extend(rs.regions());
        for (score, label) in map.values.iter().zip(rs.labels()) {
            pixels.push((*score, label.map_or(usize::MAX, |r| r + offset)));
        }
    }
    if regions.is_empty() {
        return Err(MetricError::NoRegions);
    }
    let normal_total = pixels.iter().filter(|p| p.1 == usize::MAX).count();
    if normal_total == 0 {
        return Err(MetricError::NoNormalPixels);
    }

    pixels.sort_by(|a, b| b.0.total_cmp(&a.0));
    let m = regions.len() as f64;
    let mut counts = vec![0usize; regions.len()];
    let mut false_pos = 0usize;
    let mut value = 0.0;
    let mut curve = vec![CurvePoint {
        fpr: 0.0,
        value: 0.0,
    }];
    let mut i = 0;
    while i < pixels.len() {
        let t = pixels[i].0;
        let mut touched = false;
        while i < pixels.len() && pixels[i].0 == t {
            match pixels[i].1 {
                usize::MAX => false_pos += 1,
                r => {
                    counts[r] += 1;
                    touched = true;
                }
            }
            i += 1;
        }
        if touched {
            let sum: f64 = regions
                .iter()
                .zip(&counts)
                .map(|(r, &c)| overlap(c, r))
                .sum();
            value = sum / m;
        }
        let fpr = false_pos as f64 / normal_total as f64;
        curve.push(CurvePoint { fpr, value });
        if fpr >= stop_fpr {
            break;
        }
    }
    Ok(curve)
}

/// Normalized area under a curve sorted by nondecreasing FPR, on `[0, limit]`.
pub fn integrate_curve(points: &[CurvePoint], limit: f64) -> f64 {
    let mut area = 0.0;
    for w in points.windows(2) {
        let (a, b) = (w[0], w[1]);
        if a.fpr >= limit {
            break;
        }
        if b.fpr <= limit {
            area += (b.fpr - a.fpr) * (a.value + b.value) / 2.0;
        } else {
            let v = a.value + (b.value - a.value) * (limit - a.fpr) / (b.fpr - a.fpr);
            area += (limit - a.fpr) * (a.value + v) / 2.0;
            break;
        }
    }
    area / limit
}

/// Full PRO curve (every distinct threshold).
pub fn pro_curve(maps: &[ScoreMap], masks: &[PixelMask]) -> Result<Vec<CurvePoint>, MetricError> {
    let sets = regions_from_masks(maps, masks)?;
    sweep(maps, &sets, pro_overlap, f64::INFINITY)
}

/// Full sPRO curve (every distinct threshold).
pub fn spro_curve(
    maps: &[ScoreMap],
    region_sets: &[RegionSet],
) -> Result<Vec<CurvePoint>, MetricError> {
    sweep(maps, region_sets, spro_overlap, f64::INFINITY)
}

fn pro_overlap(count: usize, r: &Region) -> f64 {
    count as f64 / r.area() as f64
}

fn spro_overlap(count: usize, r: &Region) -> f64 {
    (count as f64 / r.saturation).min(1.0)
}

/// Area under the PRO curve up to `fpr_limit`, normalized to [0, 1].
pub fn aupro(maps: &[ScoreMap], masks: &[PixelMask], fpr_limit: f64) -> Result<f64, MetricError> {
    check_limit(fpr_limit)?;
    let sets = regions_from_masks(maps, masks)?;
    let curve = sweep(maps, &sets, pro_overlap, fpr_limit)?;
    Ok(integrate_curve(&curve, fpr_limit).clamp(0.0, 1.0))
}

/// Area under the sPRO curve up to `fpr_limit`, normalized to [0, 1].
pub fn mean_spro(
    maps: &[ScoreMap],
    region_sets: &[RegionSet],
    fpr_limit: f64,
) -> Result<f64, MetricError> {
    check_limit(fpr_limit)?;
    let curve = sweep(maps, region_sets, spro_overlap, fpr_limit)?;
    Ok(integrate_curve(&curve, fpr_limit).clamp(0.0, 1.0))
}

/// Pools every pixel of every map into one scored set (positive = mask pixel).
pub fn pixel_scores(maps: &[ScoreMap], masks: &[PixelMask]) -> Result<LabeledScores, MetricError> {
    if maps.len() != masks.len() {
        return Err(MetricError::DimMismatch(format!(
            "{} maps vs {} masks",
            maps.len(),
            masks.len()
        )));
    }
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for (map, mask) in maps.iter().zip(masks) {
        if map.height != mask.height() || map.width != mask.width() {
            return Err(MetricError::DimMismatch(format!(
                "map {}x{} vs mask {}x{}",
                map.height,
                map.width,
                mask.height(),
                mask.width()
            )));
        }
        scores.extend_from_slice(&map.values);
        labels.extend_from_slice(mask.bits());
    }
    LabeledScores::new(scores, labels)
}
