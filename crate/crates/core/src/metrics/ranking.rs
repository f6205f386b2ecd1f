use std::cmp::Ordering;

use super::MetricError;

/// Scores with binary labels (`true` = positive / anomalous).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledScores {
    scores: Vec<f64>,
    labels: Vec<bool>,
}

impl LabeledScores {
    pub fn new(scores: Vec<f64>, labels: Vec<bool>) -> Result<Self, MetricError> {
        if scores.len() != labels.len() {
            return Err(MetricError::DimMismatch(format!(
                "{} scores vs {} labels",
                scores.len(),
                labels.len()
            )));
        }
        if scores.is_empty() {
            return Err(MetricError::InvalidInput("no items".into()));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(MetricError::InvalidInput("non-finite score".into()));
        }
        Ok(Self { scores, labels })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|l| **l).count()
    }

    pub fn negatives(&self) -> usize {
        self.labels.len() - self.positives()
    }

    /// Cumulative `(tp, fp)` after each group of tied scores, highest first.
    fn tie_grouped_counts(&self) -> Vec<(u64, u64)> {
        let mut order: Vec<usize> = (0..self.scores.len()).collect();
        order.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]));
        let mut out = Vec::new();
        let (mut tp, mut fp) = (0u64, 0u64);
        let mut i = 0;
        while i < order.len() {
            let s = self.scores[order[i]];
            while i < order.len() && self.scores[order[i]].total_cmp(&s) == Ordering::Equal {
                if self.labels[order[i]] {
                    tp += 1;
                } else {
                    fp += 1;
                }
                i += 1;
            }
            out.push((tp, fp));
        }
        out
    }
}

/// Area under the tie-grouped ROC curve.
///
/// Trapezoids are accumulated in integer arithmetic (twice the area in
/// units of one pair), so the result equals the Mann-Whitney statistic
/// with half credit for ties.
pub fn auroc(data: &LabeledScores) -> Result<f64, MetricError> {
    let (p, n) = (data.positives() as u128, data.negatives() as u128);
    if p == 0 || n == 0 {
        return Err(MetricError::DegenerateLabels);
    }
    let mut twice_area: u128 = 0;
    let (mut prev_tp, mut prev_fp) = (0u128, 0u128);
    for (tp, fp) in data.tie_grouped_counts() {
        let (tp, fp) = (tp as u128, fp as u128);
        twice_area += (fp - prev_fp) * (tp + prev_tp);
        prev_tp = tp;
        prev_fp = fp;
    }
    Ok(twice_area as f64 / (2 * p * n) as f64)
}

/// Average precision: `Σ (R_n − R_{n−1}) · P_n` over descending distinct
/// score thresholds, ties forming one step.
pub fn average_precision(data: &LabeledScores) -> Result<f64, MetricError> {
    let p = data.positives();
    if p == 0 {
        return Err(MetricError::NoPositives);
    }
    let mut ap = 0.0;
    let mut prev_tp = 0u64;
    for (tp, fp) in data.tie_grouped_counts() {
        if tp > prev_tp {
            let recall_step = (tp - prev_tp) as f64 / p as f64;
            ap += recall_step * tp as f64 / (tp + fp) as f64;
        }
        prev_tp = tp;
    }
    // Summation error can push a perfect ranking past 1.
    Ok(ap.min(1.0))
}
