//! Parameter and multiply-accumulate counts from a network description.
//!
//! MAC model:
//!
//! * convolution: `K^2 Ho Wo Cin Cout`;
//! * depthwise-separable block: `(K^2 Cin + Cin Cout) H W`;
//! * spectral filter: `4 Cin Cout H (W/2+1)` (one complex MAC is four real
//!   ones) plus `C_FFT (Cin + Cout) H W log2(H W)` for the transforms;
//! * dense: `inputs * units`.
//!
//! Normalization, activations, pooling and dropout are counted as free.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fft::half_width;
use crate::models::{trace_shapes, LayerNode, NetworkSpec};

/// Real operations per point per `log2(n)` charged to one FFT.
pub const C_FFT: f64 = 5.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerCost {
    pub tower: String,
    pub index: usize,
    pub kind: String,
    pub input_shape: Vec<usize>,
    pub output_shape: Vec<usize>,
    /// Trainable parameters.
    pub params: usize,
    /// Non-trainable state (normalization running statistics).
    pub buffers: usize,
    pub macs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub layers: Vec<LayerCost>,
    pub total_params: usize,
    pub total_buffers: usize,
    pub total_macs: f64,
}

impl CostReport {
    pub fn tower_params(&self, tower: &str) -> usize {
        self.layers
            .iter()
            .filter(|l| l.tower == tower)
            .map(|l| l.params)
            .sum()
    }
}

fn node_cost(node: &LayerNode, input: &[usize], output: &[usize]) -> (usize, usize, f64) {
    match node {
        LayerNode::Conv { kernel, bias, .. } => {
            let (k, cin, cout) = (*kernel, input[2], output[2]);
            let params = k * k * cin * cout + if *bias { cout } else { 0 };
            (params, 0, (k * k * output[0] * output[1] * cin * cout) as f64)
        }
        LayerNode::BatchNorm => {
            let c = *input.last().unwrap();
            (2 * c, 2 * c, 0.0)
        }
        LayerNode::DepthwiseSeparable { kernel, norm, .. } => {
            let (k, cin, cout) = (*kernel, input[2], output[2]);
            let core = k * k * cin + cin * cout;
            let bn = if *norm { 2 * cin + 2 * cout } else { 0 };
            (core + bn, bn, (core * input[0] * input[1]) as f64)
        }
        LayerNode::SpectralFilter { .. } => {
            let (h, w, cin, cout) = (input[0], input[1], input[2], output[2]);
            let bins = h * half_width(w);
            let hw = (h * w) as f64;
            let macs = 4.0 * (cin * cout * bins) as f64 + C_FFT * (cin + cout) as f64 * hw * hw.log2();
            (2 * cin * cout * bins + cout, 0, macs)
        }
        LayerNode::Dense { units } => {
            let inputs = input[0];
            (inputs * units + units, 0, (inputs * units) as f64)
        }
        LayerNode::Relu
        | LayerNode::MaxPool { .. }
        | LayerNode::Dropout { .. }
        | LayerNode::GlobalAvgPool
        | LayerNode::Flatten => (0, 0, 0.0),
    }
}

/// Per-layer table for every tower and the head.
pub fn count_params_flops(spec: &NetworkSpec) -> Result<CostReport> {
    let (d_s, d_f) = spec.validate()?;
    let input = spec.input_shape.to_vec();
    let mut stacks: Vec<(&str, &[LayerNode], Vec<usize>)> = Vec::new();
    if let Some(n) = &spec.spatial {
        stacks.push(("spatial", n, input.clone()));
    }
    if let Some(n) = &spec.spectral {
        stacks.push(("spectral", n, input.clone()));
    }
    let head_in = match spec.fusion {
        Some(kind) => vec![kind.output_dim(d_s, d_f)],
        None => trace_shapes(stacks[0].1, &input)?.pop().unwrap(),
    };
    stacks.push(("head", &spec.head, head_in));

    let mut layers = Vec::new();
    for (tower, nodes, inp) in stacks {
        let shapes = trace_shapes(nodes, &inp)?;
        for (i, node) in nodes.iter().enumerate() {
            let (params, buffers, macs) = node_cost(node, &shapes[i], &shapes[i + 1]);
            layers.push(LayerCost {
                tower: tower.into(),
                index: i,
                kind: node.kind_name().into(),
                input_shape: shapes[i].clone(),
                output_shape: shapes[i + 1].clone(),
                params,
                buffers,
                macs,
            });
        }
    }
    Ok(CostReport {
        total_params: layers.iter().map(|l| l.params).sum(),
        total_buffers: layers.iter().map(|l| l.buffers).sum(),
        total_macs: layers.iter().map(|l| l.macs).sum(),
        layers,
    })
}

/// An exact non-negative fraction.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Ratio {
    pub num: u128,
    pub den: u128,
}

impl Ratio {
    pub fn new(num: u128, den: u128) -> Self {
        Self { num, den }
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl std::fmt::Display for Ratio {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl PartialEq for Ratio {
    fn eq(&self, other: &Self) -> bool {
        self.num * other.den == other.num * self.den
    }
}

/// Parameter ratio of a bias-free depthwise-separable block to a bias-free
/// full convolution, from the counting formulas.
pub fn depthwise_param_ratio(kernel: usize, cin: usize, cout: usize) -> Ratio {
    let (k2, cin, cout) = ((kernel * kernel) as u128, cin as u128, cout as u128);
    Ratio::new(k2 * cin + cin * cout, k2 * cin * cout)
}

/// Closed form `1/Cout + 1/K^2`.
pub fn depthwise_ratio_closed_form(kernel: usize, cout: usize) -> Ratio {
    let (k2, cout) = ((kernel * kernel) as u128, cout as u128);
    Ratio::new(k2 + cout, cout * k2)
}
