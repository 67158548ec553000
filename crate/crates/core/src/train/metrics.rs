use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub weighted_f1: f64,
    /// Support-weighted one-vs-rest AUC over the classes where it is
    /// defined; `None` when it is defined for none.
    pub auc: Option<f64>,
    pub mcc: f64,
    pub per_class: Vec<ClassMetrics>,
    /// `confusion[true][predicted]`
    pub confusion: Vec<Vec<usize>>,
}

/// Index of the first maximum.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Mann-Whitney AUC of `scores` for the positive set; ties get half credit.
/// `None` when either side is empty.
pub fn binary_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // sum of (1-based, tie-averaged) ranks of the positives
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j + 2) as f64 / 2.0;
        rank_sum += avg * order[i..=j].iter().filter(|&&k| positive[k]).count() as f64;
        i = j + 1;
    }
    let np = n_pos as f64;
    Some((rank_sum - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}

/// Accuracy, weighted F1, weighted one-vs-rest AUC and multiclass MCC from
/// class probabilities `[N, K]`.
pub fn metrics(probs: &Tensor, labels: &[usize]) -> Result<MetricsReport> {
    probs.expect_rank(2, "metrics probabilities")?;
    let (n, k) = (probs.shape()[0], probs.shape()[1]);
    if labels.len() != n {
        return shape_err(format!("{} labels for {n} probability rows", labels.len()));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= k) {
        return Err(Error::Data(format!("label {y} out of range for {k} classes")));
    }
    let preds: Vec<usize> = probs.data().chunks(k).map(argmax).collect();
    let mut confusion = vec![vec![0usize; k]; k];
    for (&y, &p) in labels.iter().zip(&preds) {
        confusion[y][p] += 1;
    }
    let correct: usize = (0..k).map(|c| confusion[c][c]).sum();
    let support: Vec<usize> = confusion.iter().map(|r| r.iter().sum()).collect();
    let predicted: Vec<usize> = (0..k).map(|c| (0..k).map(|r| confusion[r][c]).sum()).collect();

    let per_class: Vec<ClassMetrics> = (0..k)
        .map(|c| {
            let tp = confusion[c][c] as f64;
            let precision = ratio(tp, predicted[c] as f64);
            let recall = ratio(tp, support[c] as f64);
            ClassMetrics {
                precision,
                recall,
                f1: ratio(2.0 * precision * recall, precision + recall),
                support: support[c],
            }
        })
        .collect();
    let nf = n as f64;
    let weighted_f1 = per_class
        .iter()
        .map(|m| m.f1 * m.support as f64 / nf)
        .sum();

    let mut auc_sum = 0.0;
    let mut auc_weight = 0.0;
    for (c, &n) in support.iter().enumerate() {
        let scores: Vec<f64> = probs.data().iter().skip(c).step_by(k).copied().collect();
        let positive: Vec<bool> = labels.iter().map(|&y| y == c).collect();
        match binary_auc(&scores, &positive) {
            Some(a) => {
                auc_sum += a * n as f64;
                auc_weight += n as f64;
            }
            None if n > 0 => {
                log::warn!("AUC undefined for class {c} (no negatives); excluded")
            }
            None => log::warn!("AUC undefined for class {c} (no samples); excluded"),
        }
    }
    let auc = (auc_weight > 0.0).then(|| auc_sum / auc_weight);

    let s = nf;
    let c = correct as f64;
    let pt: f64 = (0..k).map(|i| predicted[i] as f64 * support[i] as f64).sum();
    let pp: f64 = predicted.iter().map(|&v| (v as f64).powi(2)).sum();
    let tt: f64 = support.iter().map(|&v| (v as f64).powi(2)).sum();
    let den = ((s * s - pp) * (s * s - tt)).sqrt();
    let mcc = ratio(c * s - pt, den);

    Ok(MetricsReport {
        accuracy: c / nf,
        weighted_f1,
        auc,
        mcc,
        per_class,
        confusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn onehot(labels: &[usize], k: usize) -> Tensor {
        Tensor::from_fn(&[labels.len(), k], |i| (labels[i / k] == i % k) as u8 as f64)
    }

    #[test]
    fn perfect_predictions() {
        let y = [0, 1, 2, 1, 0, 2];
        let r = metrics(&onehot(&y, 3), &y).unwrap();
        assert_eq!((r.accuracy, r.weighted_f1, r.auc, r.mcc), (1.0, 1.0, Some(1.0), 1.0));
    }

    #[test]
    fn anti_perfect_binary() {
        let y = [0, 1, 0, 1];
        let r = metrics(&onehot(&[1, 0, 1, 0], 2), &y).unwrap();
        assert_eq!(r.mcc, -1.0);
        assert_eq!(r.accuracy, 0.0);
        assert_eq!(r.auc, Some(0.0));
    }

    #[test]
    fn ties_get_half_credit() {
        assert_eq!(binary_auc(&[0.5, 0.5], &[true, false]), Some(0.5));
        assert_eq!(binary_auc(&[0.1, 0.9], &[true, true]), None);
    }

    #[test]
    fn single_class_ground_truth_has_no_auc() {
        let r = metrics(&onehot(&[0, 0], 2), &[0, 0]).unwrap();
        assert_eq!(r.auc, None);
    }
}
