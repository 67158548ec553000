use rand::seq::SliceRandom;

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::rng;

fn compare_images(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

/// Stratified split into `fractions.len()` parts (tagged `split0`, ... or
/// `train`/`val`/`test` for three parts). Within each class the samples are
/// sorted by content and then shuffled by `seed`, so the result does not
/// depend on the input order. Per-class counts are `round(n_c f_i)` with the
/// remainder going to the last part.
pub fn split(dataset: &LabeledDataset, fractions: &[f64], seed: u64) -> Result<Vec<LabeledDataset>> {
    if fractions.is_empty() || fractions.iter().any(|&f| !(0.0..=1.0).contains(&f)) {
        return Err(Error::InvalidArgument(format!(
            "split fractions must lie in [0, 1], got {fractions:?}"
        )));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "split fractions must sum to 1, got {total}"
        )));
    }
    let parts = fractions.len();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); parts];
    for class in 0..dataset.n_classes() {
        let mut idx: Vec<usize> = (0..dataset.len())
            .filter(|&i| dataset.labels()[i] == class)
            .collect();
        if idx.len() < parts {
            return Err(Error::Stratification(format!(
                "class {class} has {} samples, fewer than {parts} splits",
                idx.len()
            )));
        }
        idx.sort_by(|&a, &b| compare_images(dataset.image(a), dataset.image(b)));
        idx.shuffle(&mut rng::stream(seed, &format!("split/{class}")));
        let n = idx.len();
        let mut start = 0;
        for (p, &f) in fractions.iter().enumerate() {
            let count = if p + 1 == parts {
                n - start
            } else {
                ((n as f64 * f).round() as usize).min(n - start)
            };
            members[p].extend_from_slice(&idx[start..start + count]);
            start += count;
        }
    }
    let names: Vec<String> = if parts == 3 {
        vec!["train".into(), "val".into(), "test".into()]
    } else {
        (0..parts).map(|p| format!("split{p}")).collect()
    };
    members
        .iter()
        .zip(names)
        .map(|(m, name)| {
            if m.is_empty() {
                return Err(Error::Stratification(format!("split `{name}` would be empty")));
            }
            dataset.subset(m, name)
        })
        .collect()
}
