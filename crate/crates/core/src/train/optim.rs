use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{GradStore, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates per trainable parameter.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState {
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }
}

/// One bias-corrected Adam update at step `t >= 1` over every trainable
/// parameter. A trainable parameter without a gradient is an error.
pub fn adam_step(
    params: &mut ParamStore,
    grads: &GradStore,
    state: &mut AdamState,
    t: u64,
    cfg: &AdamConfig,
) -> Result<()> {
    if t == 0 {
        return Err(Error::InvalidArgument("Adam steps start at t = 1".into()));
    }
    let c1 = 1.0 - cfg.beta1.powi(t as i32);
    let c2 = 1.0 - cfg.beta2.powi(t as i32);
    for (name, p) in params.iter_mut() {
        if !p.kind.trainable() {
            continue;
        }
        let g = grads
            .get(name)
            .ok_or_else(|| Error::State(format!("no gradient for `{name}`")))?;
        if g.shape() != p.value.shape() {
            return Err(Error::State(format!(
                "gradient for `{name}` has shape {:?}, parameter has {:?}",
                g.shape(),
                p.value.shape()
            )));
        }
        let n = g.len();
        let m = state.m.entry(name.to_owned()).or_insert_with(|| vec![0.0; n]);
        let v = state.v.entry(name.to_owned()).or_insert_with(|| vec![0.0; n]);
        if m.len() != n || v.len() != n {
            return Err(Error::State(format!("optimizer state for `{name}` has the wrong size")));
        }
        for (((w, &gi), mi), vi) in p
            .value
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.iter_mut())
            .zip(v.iter_mut())
        {
            *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gi;
            *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * gi * gi;
            let mhat = *mi / c1;
            let vhat = *vi / c2;
            *w -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlateauConfig {
    pub patience: usize,
    pub factor: f64,
    pub min_delta: f64,
    pub min_lr: f64,
}

impl Default for PlateauConfig {
    fn default() -> Self {
        Self {
            patience: 5,
            factor: 0.5,
            min_delta: 1e-4,
            min_lr: 1e-6,
        }
    }
}

impl PlateauConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patience == 0 {
            return Err(Error::Config("plateau patience must be at least 1".into()));
        }
        if !(self.factor > 0.0 && self.factor < 1.0) {
            return Err(Error::Config(format!(
                "plateau factor must be in (0, 1), got {}",
                self.factor
            )));
        }
        if self.min_lr < 0.0 || self.min_delta < 0.0 {
            return Err(Error::Config("plateau min_lr and min_delta must be >= 0".into()));
        }
        Ok(())
    }
}

/// Reduce-on-plateau for a metric that should increase.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Plateau {
    best: Option<f64>,
    wait: usize,
}

impl Plateau {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    /// Records one epoch's metric and returns the learning rate to use next.
    pub fn observe(&mut self, metric: f64, lr: f64, cfg: &PlateauConfig) -> f64 {
        match self.best {
            Some(b) if metric <= b + cfg.min_delta => {
                self.wait += 1;
                if self.wait >= cfg.patience {
                    self.wait = 0;
                    return (lr * cfg.factor).max(cfg.min_lr);
                }
                lr
            }
            _ => {
                self.best = Some(metric);
                self.wait = 0;
                lr
            }
        }
    }
}

/// Replays a metric history; returns the learning rate in effect after each
/// epoch.
pub fn reduce_lr_on_plateau(history: &[f64], initial_lr: f64, cfg: &PlateauConfig) -> Vec<f64> {
    let mut p = Plateau::new();
    let mut lr = initial_lr;
    history
        .iter()
        .map(|&m| {
            lr = p.observe(m, lr, cfg);
            lr
        })
        .collect()
}
