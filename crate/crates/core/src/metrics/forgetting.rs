use serde::{Deserialize, Serialize};

use super::MetricError;

/// Lower-triangular matrix of task metrics: `T[l][j]` is the metric on task
/// `j` after training step `l` (both 1-based, `l >= j`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskMatrix {
    rows: Vec<Vec<Option<f64>>>,
}

impl TaskMatrix {
    pub fn new(steps: usize) -> Self {
        Self {
            rows: (1..=steps).map(|l| vec![None; l]).collect(),
        }
    }

    pub fn steps(&self) -> usize {
        self.rows.len()
    }

    pub fn set(&mut self, l: usize, j: usize, value: f64) -> Result<(), MetricError> {
        if l == 0 || j == 0 || j > l || l > self.rows.len() {
            return Err(MetricError::InvalidInput(format!(
                "T[{l},{j}] outside a {}-step lower-triangular matrix",
                self.rows.len()
            )));
        }
        if !(0.0..=1.0).contains(&value) {
            return Err(MetricError::InvalidInput(format!(
                "T[{l},{j}] = {value} outside [0, 1]"
            )));
        }
        self.rows[l - 1][j - 1] = Some(value);
        Ok(())
    }

    pub fn get(&self, l: usize, j: usize) -> Option<f64> {
        self.rows
            .get(l.wrapping_sub(1))?
            .get(j.wrapping_sub(1))
            .copied()
            .flatten()
    }

    /// Number of populated entries.
    pub fn filled(&self) -> usize {
        self.rows.iter().flatten().filter(|v| v.is_some()).count()
    }

    /// Rows as plain values; missing entries become `None`.
    pub fn rows(&self) -> &[Vec<Option<f64>>] {
        &self.rows
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForgettingReport {
    /// `FM_j^k` for `j = 1..k-1`.
    pub per_task: Vec<f64>,
    pub mean: f64,
}

/// `FM_j^k = max_{l<k} T[l][j] − T[k][j]` for every task before the last.
pub fn forgetting_measure(t: &TaskMatrix) -> Result<ForgettingReport, MetricError> {
    let k = t.steps();
    if k < 2 {
        return Err(MetricError::SingleTask);
    }
    let mut per_task = Vec::with_capacity(k - 1);
    for j in 1..k {
        let mut best = f64::NEG_INFINITY;
        for l in j..k {
            best = best.max(t.get(l, j).ok_or(MetricError::IncompleteMatrix { l, j })?);
        }
        let last = t
            .get(k, j)
            .ok_or(MetricError::IncompleteMatrix { l: k, j })?;
        per_task.push(best - last);
    }
    let mean = per_task.iter().sum::<f64>() / per_task.len() as f64;
    Ok(ForgettingReport { per_task, mean })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(entries: &[(usize, usize, f64)], k: usize) -> TaskMatrix {
        let mut t = TaskMatrix::new(k);
        for &(l, j, v) in entries {
            t.set(l, j, v).unwrap();
        }
        t
    }

    #[test]
    fn two_task_cases() {
        let t = matrix(&[(1, 1, 0.9), (2, 1, 0.7), (2, 2, 0.8)], 2);
        let fm = forgetting_measure(&t).unwrap();
        assert!((fm.per_task[0] - 0.2).abs() < 1e-12);
        let t = matrix(&[(1, 1, 0.5), (2, 1, 0.6), (2, 2, 0.8)], 2);
        assert!((forgetting_measure(&t).unwrap().per_task[0] + 0.1).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        assert_eq!(
            forgetting_measure(&TaskMatrix::new(1)),
            Err(MetricError::SingleTask)
        );
        let t = matrix(&[(1, 1, 0.9), (2, 2, 0.8)], 2);
        assert_eq!(
            forgetting_measure(&t),
            Err(MetricError::IncompleteMatrix { l: 2, j: 1 })
        );
        let mut t = TaskMatrix::new(2);
        assert!(t.set(1, 2, 0.5).is_err());
        assert!(t.set(2, 1, 1.5).is_err());
    }
}
