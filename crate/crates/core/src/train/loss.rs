use crate::error::{shape_err, Error, Result};
use crate::tensor::Tensor;

/// `N / (K * n_c)` per class: rare classes weigh more, and
/// `sum_c w_c n_c == N`.
pub fn balanced_class_weights(counts: &[usize]) -> Result<Vec<f64>> {
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(Error::Data(format!(
            "class {c} has no samples; balanced weights are undefined"
        )));
    }
    let total: usize = counts.iter().sum();
    let k = counts.len() as f64;
    Ok(counts
        .iter()
        .map(|&n| total as f64 / (k * n as f64))
        .collect())
}

/// Batch mean of `w[y] * -log softmax(logits)[y]` and its gradient w.r.t.
/// the logits, `w[y] (softmax - onehot) / B`.
pub fn weighted_cross_entropy(
    logits: &Tensor,
    labels: &[usize],
    weights: &[f64],
) -> Result<(f64, Tensor)> {
    logits.expect_rank(2, "cross entropy logits")?;
    let (b, k) = (logits.shape()[0], logits.shape()[1]);
    if labels.len() != b {
        return shape_err(format!("{} labels for {b} logit rows", labels.len()));
    }
    if weights.len() != k {
        return Err(Error::InvalidArgument(format!(
            "{} class weights for {k} classes",
            weights.len()
        )));
    }
    let mut grad = vec![0.0; b * k];
    let mut total = 0.0;
    for (i, (row, &y)) in logits.data().chunks(k).zip(labels).enumerate() {
        if y >= k {
            return Err(Error::Data(format!("label {y} out of range for {k} classes")));
        }
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        let w = weights[y];
        total += w * (log_z - row[y]);
        let g = &mut grad[i * k..(i + 1) * k];
        for (gj, &v) in g.iter_mut().zip(row) {
            *gj = w * (v - log_z).exp() / b as f64;
        }
        g[y] -= w / b as f64;
    }
    Ok((total / b as f64, Tensor::new(vec![b, k], grad)?))
}

/// Unweighted cross entropy.
pub fn cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let k = logits.shape().last().copied().unwrap_or(0);
    weighted_cross_entropy(logits, labels, &vec![1.0; k])
}
