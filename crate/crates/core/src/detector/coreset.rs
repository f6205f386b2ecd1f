use serde::{Deserialize, Serialize};

use super::{make_projector, squared_distance, DetectorError, MemoryBank, Projector};
use crate::features::PatchFeatureGrid;

/// Target coreset size, as a fraction of the bank or an absolute count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoresetBudget {
    Fraction(f64),
    Count(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoresetParams {
    pub budget: CoresetBudget,
    /// `None` compares vectors in their native space.
    pub projection_dim: Option<usize>,
    pub seed: u64,
}

impl CoresetParams {
    /// Keeps every vector.
    pub fn full() -> Self {
        Self {
            budget: CoresetBudget::Fraction(1.0),
            projection_dim: None,
            seed: 0,
        }
    }

    /// Resolves the budget against a bank of `n` vectors. Fractions round up.
    pub fn resolve(&self, n: usize) -> Result<usize, DetectorError> {
        let l = match self.budget {
            CoresetBudget::Count(l) => l,
            CoresetBudget::Fraction(f) if f > 0.0 && f <= 1.0 => {
                ((f * n as f64).ceil() as usize).min(n)
            }
            CoresetBudget::Fraction(_) => 0,
        };
        if l == 0 || l > n {
            return Err(DetectorError::LOutOfRange { l, available: n });
        }
        Ok(l)
    }
}

/// Greedy k-center selection in projected space. The first pick is index 0;
/// each later pick maximizes the distance to the nearest already-picked
/// vector, ties going to the lowest index.
pub fn coreset_select(
    bank: &MemoryBank,
    params: &CoresetParams,
) -> Result<Vec<usize>, DetectorError> {
    let n = bank.len();
    let l = params.resolve(n)?;
    let projector = match params.projection_dim {
        None => Projector::identity(bank.dim()),
        Some(d) => make_projector(bank.dim(), d, params.seed)?,
    };
    let projected: Vec<Vec<f64>> = bank.vectors().map(|v| projector.apply(v)).collect();
    Ok(greedy_k_center(&projected, l))
}

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn greedy_k_center(points: &[Vec<f64>], l: usize) -> Vec<usize> {
    let mut selected = Vec::with_capacity(l);
    let mut taken = vec![false; points.len()];
    let mut min_d = vec![f64::INFINITY; points.len()];
    let mut next = 0;
    loop {
        selected.push(next);
        taken[next] = true;
        if selected.len() == l {
            return selected;
        }
        let centre = &points[next];
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        for (i, p) in points.iter().enumerate() {
            if taken[i] {
                continue;
            }
            let d = sq(p, centre);
            if d < min_d[i] {
                min_d[i] = d;
            }
            if min_d[i] > best.0 {
                best = (min_d[i], i);
            }
        }
        next = best.1;
    }
}

/// Largest distance from any bank vector to its nearest selected vector.
pub fn covering_radius(bank: &MemoryBank, selected: &[usize]) -> f64 {
    bank.vectors()
        .map(|v| {
            selected
                .iter()
                .map(|&s| squared_distance(v, bank.vector(s)))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
        .sqrt()
}

/// Appends the coreset of a new task's patches to `bank`, tagged with
/// `task_index`. Existing vectors are untouched.
pub fn extend_bank_for_task(
    bank: &MemoryBank,
    new_grids: &[PatchFeatureGrid],
    task_index: u32,
    params: &CoresetParams,
) -> Result<MemoryBank, DetectorError> {
    if let Some(&max_existing) = bank.task_tags().iter().max() {
        if task_index <= max_existing {
            return Err(DetectorError::TaskOrderViolation {
                task: task_index,
                max_existing,
            });
        }
    }
    let task_bank = MemoryBank::build(new_grids)?;
    if task_bank.dim() != bank.dim() {
        return Err(DetectorError::DimMismatch {
            expected: bank.dim(),
            actual: task_bank.dim(),
        });
    }
    let picked = coreset_select(&task_bank, params)?;
    let mut out = bank.clone();
    out.append(&task_bank.subset(&picked), task_index);
    Ok(out)
}
