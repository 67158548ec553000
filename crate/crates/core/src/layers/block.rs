use super::{BatchNorm, Conv2d, DepthwiseConv2d, Layer, Mode, Padding, Relu, Sequential};
use crate::error::Result;
use crate::params::{GradStore, ParamStore};
use crate::tensor::Tensor;

/// Depthwise `K x K` conv -> BN -> ReLU -> pointwise `1 x 1` conv -> BN ->
/// ReLU. Convolutions carry no bias; the norms supply the shift. With
/// `norm = false` the two BatchNorm stages are omitted.
#[derive(Debug)]
pub struct DepthwiseSeparableBlock {
    inner: Sequential,
    in_channels: usize,
    out_channels: usize,
}

impl DepthwiseSeparableBlock {
    pub fn new(
        name: impl Into<String>,
        kernel: usize,
        in_channels: usize,
        out_channels: usize,
        norm: bool,
        params: &mut ParamStore,
        seed: u64,
    ) -> Self {
        let name = name.into();
        let mut inner = Sequential::new(name.clone());
        inner.push(DepthwiseConv2d::new(
            format!("{name}.depthwise"),
            kernel,
            in_channels,
            params,
            seed,
        ));
        if norm {
            inner.push(BatchNorm::new(format!("{name}.bn1"), in_channels, params));
        }
        inner.push(Relu::new(format!("{name}.relu1")));
        inner.push(Conv2d::new(
            format!("{name}.pointwise"),
            1,
            1,
            Padding::Same,
            in_channels,
            out_channels,
            false,
            params,
            seed,
        ));
        if norm {
            inner.push(BatchNorm::new(format!("{name}.bn2"), out_channels, params));
        }
        inner.push(Relu::new(format!("{name}.relu2")));
        Self {
            inner,
            in_channels,
            out_channels,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }
}

impl Layer for DepthwiseSeparableBlock {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        self.inner.output_shape(input)
    }

    fn forward(&mut self, params: &mut ParamStore, x: &Tensor, mode: Mode) -> Result<Tensor> {
        self.inner.forward(params, x, mode)
    }

    fn infer(&self, params: &ParamStore, x: &Tensor) -> Result<Tensor> {
        self.inner.infer(params, x)
    }

    fn backward(
        &mut self,
        params: &ParamStore,
        upstream: &Tensor,
        grads: &mut GradStore,
    ) -> Result<Tensor> {
        self.inner.backward(params, upstream, grads)
    }
}
