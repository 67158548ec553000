//! Spatial-domain layers with closed-form backward passes.
//!
//! Activations are `[batch, height, width, channels]`; vectors are
//! `[batch, features]`. Every layer keeps the cache it needs for
//! [`Layer::backward`] from its most recent [`Layer::forward`] call and reads
//! its parameters from a shared [`ParamStore`] by name.

mod activation;
mod block;
mod conv;
mod dense;
mod dropout;
mod norm;
mod pool;

use std::fmt::Debug;

use rand_distr::{Distribution, Normal};

pub use activation::{Flatten, Relu};
pub use block::DepthwiseSeparableBlock;
pub use conv::{
    conv2d_backward, conv2d_forward, depthwise_backward, depthwise_forward, Conv2d,
    ConvGeometry, DepthwiseConv2d, Padding,
};
pub use dense::{dense_forward, Dense};
pub use dropout::{dropout, Dropout};
pub use norm::{BatchNorm, BN_EPSILON, BN_MOMENTUM};
pub use pool::{max_pool2d, GlobalAvgPool, MaxPool2d};

use crate::error::{Error, Result};
use crate::params::{GradStore, ParamKind, ParamStore};
use crate::rng;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics, active dropout. `step` keys the dropout masks.
    Train { step: u64 },
    /// Running statistics, dropout disabled.
    Eval,
}

pub trait Layer: Debug + Send + Sync {
    fn name(&self) -> &str;

    /// Per-sample output shape (no batch axis) for a per-sample input shape.
    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>>;

    /// Forward pass that records what `backward` needs.
    fn forward(&mut self, params: &mut ParamStore, x: &Tensor, mode: Mode) -> Result<Tensor>;

    /// Evaluation-mode forward that touches neither the cache nor the
    /// parameters, so a frozen model can serve concurrent callers.
    fn infer(&self, params: &ParamStore, x: &Tensor) -> Result<Tensor>;

    /// Propagates `upstream` (gradient w.r.t. this layer's output) back to the
    /// input and accumulates parameter gradients into `grads`.
    fn backward(
        &mut self,
        params: &ParamStore,
        upstream: &Tensor,
        grads: &mut GradStore,
    ) -> Result<Tensor>;
}

pub(crate) fn missing_cache(name: &str) -> Error {
    Error::State(format!("`{name}`: backward called without a cached forward pass"))
}

/// He-normal draw keyed by the parameter name.
pub(crate) fn he_normal(shape: &[usize], fan_in: usize, seed: u64, name: &str) -> Tensor {
    let std = (2.0 / fan_in as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("finite std");
    let mut r = rng::stream(seed, name);
    Tensor::from_fn(shape, |_| normal.sample(&mut r))
}

pub(crate) fn register(
    params: &mut ParamStore,
    name: &str,
    value: Tensor,
    kind: ParamKind,
) -> String {
    params.insert(name, value, kind);
    name.to_owned()
}

/// An ordered stack of layers; itself a layer.
#[derive(Debug, Default)]
pub struct Sequential {
    name: String,
    layers: Vec<Box<dyn Layer>>,
}

impl Sequential {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            layers: Vec::new(),
        }
    }

    pub fn push(&mut self, layer: impl Layer + 'static) {
        self.layers.push(Box::new(layer));
    }

    pub fn push_boxed(&mut self, layer: Box<dyn Layer>) {
        self.layers.push(layer);
    }

    pub fn with(mut self, layer: impl Layer + 'static) -> Self {
        self.push(layer);
        self
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn layers(&self) -> &[Box<dyn Layer>] {
        &self.layers
    }
}

impl Layer for Sequential {
    fn name(&self) -> &str {
        &self.name
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        self.layers
            .iter()
            .try_fold(input.to_vec(), |shape, l| l.output_shape(&shape))
    }

    fn forward(&mut self, params: &mut ParamStore, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let mut h = x.clone();
        for l in &mut self.layers {
            h = l.forward(params, &h, mode)?;
        }
        Ok(h)
    }

    fn infer(&self, params: &ParamStore, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for l in &self.layers {
            h = l.infer(params, &h)?;
        }
        Ok(h)
    }

    fn backward(
        &mut self,
        params: &ParamStore,
        upstream: &Tensor,
        grads: &mut GradStore,
    ) -> Result<Tensor> {
        let mut g = upstream.clone();
        for l in self.layers.iter_mut().rev() {
            g = l.backward(params, &g, grads)?;
        }
        Ok(g)
    }
}

pub(crate) fn expect_nhwc(x: &Tensor, what: &str) -> Result<[usize; 4]> {
    x.expect_rank(4, what)?;
    let s = x.shape();
    Ok([s[0], s[1], s[2], s[3]])
}

pub(crate) fn expect_channels(x: &Tensor, channels: usize, what: &str) -> Result<()> {
    let c = *x.shape().last().expect("rank >= 1");
    if c != channels {
        return Err(Error::InvalidShape(format!(
            "{what} expects {channels} input channels, got {c} (input shape {:?})",
            x.shape()
        )));
    }
    Ok(())
}
