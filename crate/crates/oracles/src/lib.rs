//! Brute-force reference implementations used only by tests.
//!
//! Every function here is deliberately naive: quadratic or exponential
//! where the production code is clever, and sharing no code with it.

/// AUROC as the fraction of (positive, negative) pairs ranked correctly,
/// with ties worth one half.
pub fn auroc_pairwise(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if !labels[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                wins += 1.0;
            } else if si == sj {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// Average precision recomputed from scratch at every distinct threshold:
/// `Σ (R_k − R_{k−1}) · P_k`.
pub fn ap_step_sum(scores: &[f64], labels: &[bool]) -> f64 {
    let positives = labels.iter().filter(|l| **l).count() as f64;
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    for t in thresholds {
        let mut tp = 0.0;
        let mut predicted = 0.0;
        for (s, l) in scores.iter().zip(labels) {
            if *s >= t {
                predicted += 1.0;
                if *l {
                    tp += 1.0;
                }
            }
        }
        let recall = tp / positives;
        ap += (recall - prev_recall) * (tp / predicted);
        prev_recall = recall;
    }
    ap
}

/// 8-connected components by stack flood fill, ordered by smallest pixel.
pub fn flood_fill_components(bits: &[bool], h: usize, w: usize) -> Vec<Vec<usize>> {
    let mut seen = vec![false; bits.len()];
    let mut out = Vec::new();
    for start in 0..bits.len() {
        if !bits[start] || seen[start] {
            continue;
        }
        let mut comp = Vec::new();
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(p) = stack.pop() {
            comp.push(p);
            let (r, c) = ((p / w) as i64, (p % w) as i64);
            for dr in -1..=1 {
                for dc in -1..=1 {
                    let (nr, nc) = (r + dr, c + dc);
                    if nr < 0 || nc < 0 || nr >= h as i64 || nc >= w as i64 {
                        continue;
                    }
                    let q = nr as usize * w + nc as usize;
                    if bits[q] && !seen[q] {
                        seen[q] = true;
                        stack.push(q);
                    }
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// One ground-truth region for the region-overlap oracle.
#[derive(Debug, Clone)]
pub struct OracleRegion {
    pub image: usize,
    pub pixels: Vec<usize>,
    /// Pixel count at which overlap saturates; the area for plain PRO.
    pub saturation: f64,
}

/// Normalized area under the mean region-overlap curve on `[0, limit]`.
///
/// Every distinct score is tried as a threshold (prediction = `score >= t`)
/// and the overlap and pooled false-positive rate are recounted from
/// scratch. The curve starts at `(0, 0)`.
pub fn region_overlap_area(maps: &[Vec<f64>], regions: &[OracleRegion], limit: f64) -> f64 {
    let mut in_region: Vec<Vec<bool>> = maps.iter().map(|m| vec![false; m.len()]).collect();
    for r in regions {
        for &p in &r.pixels {
            in_region[r.image][p] = true;
        }
    }
    let normal_total = in_region.iter().flatten().filter(|b| !**b).count() as f64;
    let mut thresholds: Vec<f64> = maps.iter().flatten().copied().collect();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();

    let mut curve = vec![(0.0, 0.0)];
    for t in thresholds {
        let mut fp = 0.0;
        for (m, mask) in maps.iter().zip(&in_region) {
            for (s, inside) in m.iter().zip(mask) {
                if !inside && *s >= t {
                    fp += 1.0;
                }
            }
        }
        let overlap: f64 = regions
            .iter()
            .map(|r| {
                let hit = r.pixels.iter().filter(|&&p| maps[r.image][p] >= t).count() as f64;
                (hit / r.saturation).min(1.0)
            })
            .sum::<f64>()
            / regions.len() as f64;
        curve.push((fp / normal_total, overlap));
    }
    trapezoid_up_to(&curve, limit) / limit
}

fn trapezoid_up_to(curve: &[(f64, f64)], limit: f64) -> f64 {
    let mut area = 0.0;
    for pair in curve.windows(2) {
        let ((x0, y0), (x1, y1)) = (pair[0], pair[1]);
        if x0 >= limit {
            break;
        }
        let (xe, ye) = if x1 > limit {
            (limit, y0 + (y1 - y0) * (limit - x0) / (x1 - x0))
        } else {
            (x1, y1)
        };
        area += (xe - x0) * (y0 + ye) / 2.0;
    }
    area
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Greedy k-center, recomputing every min-distance from scratch per step.
/// Seeds with index 0; ties go to the lowest index.
pub fn greedy_k_center_brute(points: &[Vec<f64>], l: usize) -> Vec<usize> {
    let mut chosen = vec![0];
    while chosen.len() < l {
        let mut best: Option<(f64, usize)> = None;
        for i in 0..points.len() {
            if chosen.contains(&i) {
                continue;
            }
            let d = chosen
                .iter()
                .map(|&c| dist(&points[i], &points[c]))
                .fold(f64::INFINITY, f64::min);
            if best.is_none_or(|(bd, _)| d > bd) {
                best = Some((d, i));
            }
        }
        chosen.push(best.expect("l <= points.len()").1);
    }
    chosen
}

/// Largest distance from any point to its nearest centre.
pub fn covering_radius(points: &[Vec<f64>], centres: &[usize]) -> f64 {
    points
        .iter()
        .map(|p| {
            centres
                .iter()
                .map(|&c| dist(p, &points[c]))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

/// Optimal k-center radius by enumerating every `l`-subset.
pub fn optimal_k_center_radius(points: &[Vec<f64>], l: usize) -> f64 {
    fn rec(points: &[Vec<f64>], l: usize, from: usize, cur: &mut Vec<usize>, best: &mut f64) {
        if cur.len() == l {
            *best = best.min(covering_radius(points, cur));
            return;
        }
        for i in from..points.len() {
            cur.push(i);
            rec(points, l, i + 1, cur, best);
            cur.pop();
        }
    }
    let mut best = f64::INFINITY;
    rec(points, l, 0, &mut Vec::new(), &mut best);
    best
}

/// Number of window positions along one axis, by stepping through them.
pub fn sliding_window_count(len: usize, patch: usize, stride: usize) -> usize {
    let mut n = 0;
    let mut start = 0;
    while start + patch <= len {
        n += 1;
        start += stride;
    }
    n
}

/// Piecewise-linear interpolation through `(anchor, value)` pairs with
/// constant extension beyond the first and last anchor.
pub fn linear_interp(anchors: &[f64], values: &[f64], x: f64) -> f64 {
    if x <= anchors[0] {
        return values[0];
    }
    for k in 1..anchors.len() {
        if x <= anchors[k] {
            let t = (x - anchors[k - 1]) / (anchors[k] - anchors[k - 1]);
            return values[k - 1] + t * (values[k] - values[k - 1]);
        }
    }
    *values.last().unwrap()
}

/// Bilinear interpolation of a `gh × gw` grid with separate row and column
/// anchors.
pub fn bilinear(
    grid: &[f64],
    gh: usize,
    gw: usize,
    row_anchors: &[f64],
    col_anchors: &[f64],
    y: f64,
    x: f64,
) -> f64 {
    let col_interp: Vec<f64> = (0..gh)
        .map(|r| linear_interp(col_anchors, &grid[r * gw..(r + 1) * gw], x))
        .collect();
    linear_interp(row_anchors, &col_interp, y)
}

/// Forgetting per earlier task from a dense `k × k` matrix (`t[l][j]`,
/// 0-based, only `l >= j` read).
pub fn forgetting_dense(t: &[Vec<f64>]) -> Vec<f64> {
    let k = t.len();
    (0..k - 1)
        .map(|j| {
            let best = (j..k - 1)
                .map(|l| t[l][j])
                .fold(f64::NEG_INFINITY, f64::max);
            best - t[k - 1][j]
        })
        .collect()
}
