use serde::{Deserialize, Serialize};

use super::{squared_distance, DetectorError, MemoryBank};
use crate::features::PatchFeatureGrid;

/// Nearest-neighbour distances for every patch of one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchScores {
    pub grid_h: usize,
    pub grid_w: usize,
    /// Euclidean distance of each patch to its nearest bank vector, row-major.
    pub distances: Vec<f64>,
    /// Bank index of each patch's nearest vector.
    pub nearest: Vec<usize>,
    pub s_star: f64,
    pub patch_index: usize,
    pub neighbor_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreResult {
    pub s_star: f64,
    pub neighbor_index: usize,
    pub patch_index: usize,
    pub s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageScore {
    pub result: ScoreResult,
    /// Raw per-patch distances; never re-weighted.
    pub patches: PatchScores,
}

fn check_query(bank: &MemoryBank, dim: usize) -> Result<(), DetectorError> {
    if bank.is_empty() {
        return Err(DetectorError::EmptyBank);
    }
    if dim != bank.dim() {
        return Err(DetectorError::DimMismatch {
            expected: bank.dim(),
            actual: dim,
        });
    }
    Ok(())
}

/// Nearest bank vector of `v` as `(index, squared distance)`; ties take the
/// lowest index.
fn nearest(bank: &MemoryBank, v: &[f32]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, m) in bank.vectors().enumerate() {
        let d = squared_distance(v, m);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

pub fn score_patches(
    bank: &MemoryBank,
    grid: &PatchFeatureGrid,
) -> Result<PatchScores, DetectorError> {
    check_query(bank, grid.dim())?;
    let mut distances = Vec::with_capacity(grid.len());
    let mut nearest_idx = Vec::with_capacity(grid.len());
    let mut arg = 0;
    for (p, v) in grid.vectors().enumerate() {
        let (i, d2) = nearest(bank, v);
        let d = d2.sqrt();
        if d > distances.get(arg).copied().unwrap_or(f64::NEG_INFINITY) {
            arg = p;
        }
        distances.push(d);
        nearest_idx.push(i);
    }
    Ok(PatchScores {
        grid_h: grid.grid_h(),
        grid_w: grid.grid_w(),
        s_star: distances[arg],
        patch_index: arg,
        neighbor_index: nearest_idx[arg],
        distances,
        nearest: nearest_idx,
    })
}

/// Softmax re-weighting over the `b` bank vectors nearest to `test`.
/// `b = 1` returns `s_star` unchanged.
pub fn reweight(
    bank: &MemoryBank,
    test: &[f32],
    s_star: f64,
    neighbor_index: usize,
    b: usize,
) -> Result<f64, DetectorError> {
    if b == 0 || b > bank.len() {
        return Err(DetectorError::BOutOfRange {
            b,
            bank: bank.len(),
        });
    }
    check_query(bank, test.len())?;
    if b == 1 {
        return Ok(s_star);
    }
    let mut ranked: Vec<(f64, usize)> = bank
        .vectors()
        .enumerate()
        .map(|(i, m)| (squared_distance(test, m), i))
        .collect();
    let by_key = |a: &(f64, usize), c: &(f64, usize)| a.0.total_cmp(&c.0).then(a.1.cmp(&c.1));
    if b < ranked.len() {
        ranked.select_nth_unstable_by(b - 1, by_key);
        ranked.truncate(b);
    }
    let d_star = squared_distance(test, bank.vector(neighbor_index)).sqrt();
    let dists: Vec<f64> = ranked.iter().map(|(d2, _)| d2.sqrt()).collect();
    let max = dists.iter().copied().fold(d_star, f64::max);
    let denom: f64 = dists.iter().map(|d| (d - max).exp()).sum();
    let weight = 1.0 - (d_star - max).exp() / denom;
    Ok((weight * s_star).clamp(0.0, s_star))
}

/// Image score: maximum patch distance, re-weighted at the argmax patch.
pub fn score_image(
    bank: &MemoryBank,
    grid: &PatchFeatureGrid,
    b: usize,
) -> Result<ImageScore, DetectorError> {
    if b == 0 || b > bank.len() {
        return Err(DetectorError::BOutOfRange {
            b,
            bank: bank.len(),
        });
    }
    let patches = score_patches(bank, grid)?;
    let s = reweight(
        bank,
        grid.vector(patches.patch_index),
        patches.s_star,
        patches.neighbor_index,
        b,
    )?;
    Ok(ImageScore {
        result: ScoreResult {
            s_star: patches.s_star,
            neighbor_index: patches.neighbor_index,
            patch_index: patches.patch_index,
            s,
        },
        patches,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bank(dim: usize, data: &[f32]) -> MemoryBank {
        MemoryBank::from_parts(dim, data.to_vec(), vec![0; data.len() / dim]).unwrap()
    }

    fn grid(gh: usize, gw: usize, dim: usize, data: &[f32]) -> PatchFeatureGrid {
        PatchFeatureGrid::new(gh, gw, dim, data.to_vec()).unwrap()
    }

    #[test]
    fn patch_distances() {
        let s =
            score_patches(&bank(2, &[0.0, 0.0]), &grid(1, 2, 2, &[0.0, 0.0, 5.0, 0.0])).unwrap();
        assert_eq!(s.distances, vec![0.0, 5.0]);
        assert_eq!((s.s_star, s.patch_index), (5.0, 1));

        let s =
            score_patches(&bank(2, &[0.0, 0.0, 1.0, 0.0]), &grid(1, 1, 2, &[0.0, 1.0])).unwrap();
        assert_eq!((s.s_star, s.neighbor_index), (1.0, 0));
    }

    #[test]
    fn reweight_examples() {
        let b = bank(1, &[0.0, 3.0]);
        assert_eq!(reweight(&b, &[1.0], 1.0, 0, 1).unwrap(), 1.0);
        let s = reweight(&b, &[1.0], 1.0, 0, 2).unwrap();
        let e = std::f64::consts::E;
        assert!((s - e / (1.0 + e)).abs() < 1e-12);
        assert!((s - 0.731059).abs() < 1e-6);

        let sym = bank(1, &[-2.0, 2.0]);
        assert!((reweight(&sym, &[0.0], 2.0, 0, 2).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(
            reweight(&b, &[1.0], 1.0, 0, 3),
            Err(DetectorError::BOutOfRange { b: 3, bank: 2 })
        );
    }

    #[test]
    fn image_score() {
        let b = bank(1, &[0.0]);
        let r = score_image(&b, &grid(1, 2, 1, &[0.1, 0.7]), 1).unwrap();
        assert!((r.result.s - 0.7).abs() < 1e-6);
        let r = score_image(&b, &grid(1, 1, 1, &[0.0]), 1).unwrap();
        assert_eq!(r.result.s, 0.0);
    }

    #[test]
    fn query_errors() {
        assert_eq!(
            score_patches(&MemoryBank::empty(1), &grid(1, 1, 1, &[0.0])),
            Err(DetectorError::EmptyBank)
        );
        assert_eq!(
            score_patches(&bank(2, &[0.0, 0.0]), &grid(1, 1, 1, &[0.0])),
            Err(DetectorError::DimMismatch {
                expected: 2,
                actual: 1
            })
        );
    }
}
