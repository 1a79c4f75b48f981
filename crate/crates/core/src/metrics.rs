//! Task metrics shared by the trainers: accuracy and ROC-AUC. Ranking
//! metrics for knowledge graphs live in `multirel`.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("length mismatch: {0} predictions vs {1} labels")]
    LengthMismatch(usize, usize),
    #[error("empty mask")]
    EmptyMask,
    #[error("roc_auc needs both classes present")]
    SingleClass,
    #[error("non-finite score at index {0}")]
    NonFiniteScore(usize),
}

#[derive(Debug, Clone)]
pub struct MetricReport {
    pub name: &'static str,
    pub value: f64,
    pub count: usize,
    /// 95% normal-approximation half-width.
    pub interval: f64,
}

fn normal_interval(value: f64, n: usize) -> f64 {
    (value * (1.0 - value) / n as f64).sqrt() * 1.96
}

/// Fraction of masked entries where prediction equals label.
pub fn accuracy(
    predictions: &[usize],
    labels: &[i64],
    mask: &[bool],
) -> Result<MetricReport, MetricError> {
    if predictions.len() != labels.len() || labels.len() != mask.len() {
        return Err(MetricError::LengthMismatch(predictions.len(), labels.len()));
    }
    let mut correct = 0usize;
    let mut total = 0usize;
    for ((p, l), m) in predictions.iter().zip(labels).zip(mask) {
        if *m {
            total += 1;
            if *p as i64 == *l {
                correct += 1;
            }
        }
    }
    if total == 0 {
        return Err(MetricError::EmptyMask);
    }
    let value = correct as f64 / total as f64;
    Ok(MetricReport {
        name: "accuracy",
        value,
        count: total,
        interval: normal_interval(value, total),
    })
}

/// Mann-Whitney pair statistic: P(score⁺ > score⁻) + ½·P(tie), computed
/// in O(n log n) by sorting and rank-summing with tie averaging.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<MetricReport, MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::LengthMismatch(scores.len(), labels.len()));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(MetricError::NonFiniteScore(i));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    // average ranks over tie groups, then U = Σ rank⁺ − n⁺(n⁺+1)/2
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            if labels[k] {
                rank_sum_pos += avg_rank;
            }
        }
        i = j;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    let value = u / (n_pos as f64 * n_neg as f64);
    let count = scores.len();
    Ok(MetricReport {
        name: "roc_auc",
        value,
        count,
        interval: normal_interval(value, count),
    })
}
