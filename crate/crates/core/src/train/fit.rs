use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::loss::{balanced_class_weights, weighted_cross_entropy};
use super::metrics::{metrics, MetricsReport};
use super::optim::{adam_step, AdamConfig, AdamState, Plateau, PlateauConfig};
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::layers::Mode;
use crate::models::Model;
use crate::params::ParamStore;
use crate::rng;
use crate::tensor::{softmax_rows, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMetric {
    WeightedF1,
    Accuracy,
}

impl SelectionMetric {
    pub fn of(self, m: &MetricsReport) -> f64 {
        match self {
            SelectionMetric::WeightedF1 => m.weighted_f1,
            SelectionMetric::Accuracy => m.accuracy,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub plateau: PlateauConfig,
    pub seed: u64,
    pub class_weighting: bool,
    pub selection: SelectionMetric,
    /// L2 penalty applied to the spectral filter weights only.
    pub spectral_weight_decay: f64,
    /// Chunk size for validation inference.
    pub eval_batch: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            batch_size: 32,
            epochs: 100,
            plateau: PlateauConfig::default(),
            seed: 0,
            class_weighting: true,
            selection: SelectionMetric::WeightedF1,
            spectral_weight_decay: 0.0,
            eval_batch: 128,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.adam.lr > 0.0 && self.adam.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be > 0, got {}", self.adam.lr)));
        }
        if !(0.0..1.0).contains(&self.adam.beta1) || !(0.0..1.0).contains(&self.adam.beta2) {
            return Err(Error::Config("Adam betas must be in [0, 1)".into()));
        }
        if self.adam.eps <= 0.0 {
            return Err(Error::Config("Adam eps must be > 0".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config(format!(
                "batch size must be at least 2, got {}",
                self.batch_size
            )));
        }
        if self.epochs == 0 || self.eval_batch == 0 {
            return Err(Error::Config("epochs and eval_batch must be positive".into()));
        }
        if self.spectral_weight_decay < 0.0 {
            return Err(Error::Config("spectral_weight_decay must be >= 0".into()));
        }
        self.plateau.validate()
    }
}

/// One line of the epoch log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Learning rate used during this epoch.
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub val_weighted_f1: f64,
    pub val_auc: Option<f64>,
    pub val_mcc: f64,
    /// Whether this epoch became the selected checkpoint.
    pub best: bool,
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_score: f64,
    pub best_metrics: MetricsReport,
}

/// Loss and metrics of a frozen model over a dataset.
pub fn evaluate(
    model: &Model,
    data: &LabeledDataset,
    weights: &[f64],
    batch: usize,
) -> Result<(f64, MetricsReport)> {
    let mut logits = Vec::with_capacity(data.len() * model.n_classes());
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(batch.max(1)) {
        let (x, _) = data.gather(chunk)?;
        logits.extend_from_slice(model.infer(&x)?.data());
    }
    let logits = Tensor::new(vec![data.len(), model.n_classes()], logits)?;
    let (loss, _) = weighted_cross_entropy(&logits, data.labels(), weights)?;
    Ok((loss, metrics(&softmax_rows(&logits)?, data.labels())?))
}

/// Mini-batch Adam with reduce-on-plateau, selecting the epoch with the best
/// validation score. On return the model holds the selected parameters.
/// Each epoch record is also written as one JSON line to `log`.
pub fn train_loop(
    model: &mut Model,
    train: &LabeledDataset,
    val: &LabeledDataset,
    cfg: &TrainConfig,
    mut log: Option<&mut dyn Write>,
) -> Result<TrainReport> {
    cfg.validate()?;
    if train.len() < 2 || val.is_empty() {
        return Err(Error::Data(format!(
            "need at least 2 training and 1 validation samples, got {} and {}",
            train.len(),
            val.len()
        )));
    }
    if train.n_classes() != model.n_classes() || train.image_shape() != model.spec().input_shape {
        return Err(Error::Config(format!(
            "model `{}` expects {:?} images in {} classes, data has {:?} in {}",
            model.spec().name,
            model.spec().input_shape,
            model.n_classes(),
            train.image_shape(),
            train.n_classes()
        )));
    }
    let weights = if cfg.class_weighting {
        balanced_class_weights(&train.class_counts())?
    } else {
        vec![1.0; train.n_classes()]
    };

    let mut adam = AdamState::new();
    let mut plateau = Plateau::new();
    let mut lr = cfg.adam.lr;
    let mut step: u64 = 0;
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, ParamStore, MetricsReport)> = None;

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng::stream(cfg.seed, &format!("shuffle/{epoch}")));
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for (bi, batch) in order.chunks(cfg.batch_size).enumerate() {
            if batch.len() < 2 {
                continue;
            }
            let (x, y) = train.gather(batch)?;
            let logits = model.forward(&x, Mode::Train { step })?;
            let (loss, dlogits) = weighted_cross_entropy(&logits, &y, &weights)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: bi, lr });
            }
            let (mut grads, _) = model.backward(&dlogits)?;
            if cfg.spectral_weight_decay > 0.0 {
                for (name, p) in model.params().iter().filter(|(_, p)| p.kind.spectral()) {
                    grads.accumulate(name, p.value.scale(cfg.spectral_weight_decay))?;
                }
            }
            step += 1;
            let step_cfg = AdamConfig { lr, ..cfg.adam };
            adam_step(model.params_mut(), &grads, &mut adam, step, &step_cfg)?;
            loss_sum += loss * batch.len() as f64;
            seen += batch.len();
        }

        let (val_loss, report) = evaluate(model, val, &weights, cfg.eval_batch)?;
        let score = cfg.selection.of(&report);
        let improved = best.as_ref().is_none_or(|(_, s, _, _)| score > *s);
        let record = EpochRecord {
            epoch,
            lr,
            train_loss: loss_sum / seen.max(1) as f64,
            val_loss,
            val_accuracy: report.accuracy,
            val_weighted_f1: report.weighted_f1,
            val_auc: report.auc,
            val_mcc: report.mcc,
            best: improved,
        };
        log::info!(
            "epoch {epoch}: lr {lr:.2e} train loss {:.4} val loss {val_loss:.4} val acc {:.4} val f1 {:.4}",
            record.train_loss,
            report.accuracy,
            report.weighted_f1
        );
        if let Some(w) = log.as_deref_mut() {
            serde_json::to_writer(&mut *w, &record)?;
            writeln!(w).map_err(|e| Error::io("<epoch log>", e))?;
        }
        history.push(record);
        if improved {
            best = Some((epoch, score, model.params().clone(), report));
        }
        lr = plateau.observe(score, lr, &cfg.plateau);
    }

    let (best_epoch, best_score, params, best_metrics) = best.expect("at least one epoch");
    model.params_mut().assign_from(&params)?;
    Ok(TrainReport {
        history,
        best_epoch,
        best_score,
        best_metrics,
    })
}
