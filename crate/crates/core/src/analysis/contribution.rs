//! Branch contribution: how strongly each tower speaks at the fusion point,
//! measured with the dimension-balanced score `C_v = ||v||_2 / sqrt(d)`.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::models::Model;

/// `||v||_2 / sqrt(d)`; 0 for an empty vector.
pub fn contribution_score(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.iter().map(|x| x * x).sum::<f64>().sqrt() / (v.len() as f64).sqrt()
}

/// The same score written as the geometric mean of `||v||` and `||v|| / d`.
pub fn contribution_score_geometric(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (norm * (norm / v.len() as f64)).sqrt()
}

/// `(spatial share, spectral share, degenerate)`; both-zero scores split
/// evenly and are flagged.
pub fn shares(c_spatial: f64, c_spectral: f64) -> (f64, f64, bool) {
    let total = c_spatial + c_spectral;
    if total == 0.0 {
        (0.5, 0.5, true)
    } else {
        (c_spatial / total, c_spectral / total, false)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleContribution {
    pub index: usize,
    pub label: usize,
    pub c_spatial: f64,
    pub c_spectral: f64,
    pub share_spatial: f64,
    pub share_spectral: f64,
    /// Both scores were zero, the shares are a convention.
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContributionSummary {
    pub count: usize,
    pub mean_c_spatial: f64,
    pub mean_c_spectral: f64,
    pub mean_share_spatial: f64,
    pub mean_share_spectral: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassContribution {
    pub class: usize,
    pub name: String,
    #[serde(flatten)]
    pub summary: ContributionSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContributionReport {
    pub d_s: usize,
    pub d_f: usize,
    pub overall: ContributionSummary,
    pub per_class: Vec<ClassContribution>,
    pub samples: Vec<SampleContribution>,
}

fn summarize<'a>(items: impl Iterator<Item = &'a SampleContribution>) -> ContributionSummary {
    let (mut n, mut cs, mut cf, mut ss, mut sf) = (0usize, 0.0, 0.0, 0.0, 0.0);
    for s in items {
        n += 1;
        cs += s.c_spatial;
        cf += s.c_spectral;
        ss += s.share_spatial;
        sf += s.share_spectral;
    }
    let d = n.max(1) as f64;
    ContributionSummary {
        count: n,
        mean_c_spatial: cs / d,
        mean_c_spectral: cf / d,
        mean_share_spatial: ss / d,
        mean_share_spectral: sf / d,
    }
}

/// Scores every sample of `data` at the pre-fusion tap of a fused model.
pub fn contribution_report(
    model: &Model,
    data: &LabeledDataset,
    batch: usize,
) -> Result<ContributionReport> {
    if !model.is_fused() {
        return Err(Error::Config(format!(
            "contribution analysis needs a fused two-tower model, `{}` has one tower",
            model.spec().name
        )));
    }
    let (d_s, d_f) = model.branch_dims();
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut samples = Vec::with_capacity(data.len());
    for chunk in idx.chunks(batch.max(1)) {
        let (x, labels) = data.gather(chunk)?;
        let bv = model.extract_branch_vectors(&x)?;
        let (v_s, v_f) = (bv.v_s.unwrap(), bv.v_f.unwrap());
        for (k, &i) in chunk.iter().enumerate() {
            let c_spatial = contribution_score(&v_s.data()[k * d_s..(k + 1) * d_s]);
            let c_spectral = contribution_score(&v_f.data()[k * d_f..(k + 1) * d_f]);
            let (share_spatial, share_spectral, degenerate) = shares(c_spatial, c_spectral);
            samples.push(SampleContribution {
                index: i,
                label: labels[k],
                c_spatial,
                c_spectral,
                share_spatial,
                share_spectral,
                degenerate,
            });
        }
    }
    let per_class = (0..data.n_classes())
        .map(|c| ClassContribution {
            class: c,
            name: data.class_names()[c].clone(),
            summary: summarize(samples.iter().filter(|s| s.label == c)),
        })
        .collect();
    Ok(ContributionReport {
        d_s,
        d_f,
        overall: summarize(samples.iter()),
        per_class,
        samples,
    })
}

impl ContributionReport {
    /// Per-sample rows: `index,label,c_spatial,c_spectral,share_spatial,share_spectral,degenerate`.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for s in &self.samples {
            w.serialize(s)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn save(&self, json_path: impl AsRef<Path>, csv_path: impl AsRef<Path>) -> Result<()> {
        let json_path = json_path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(json_path, text).map_err(|e| Error::io(json_path, e))?;
        let csv_path = csv_path.as_ref();
        let f = std::fs::File::create(csv_path).map_err(|e| Error::io(csv_path, e))?;
        self.write_csv(f)
    }
}
