//! Symbolic and empirical receptive fields.
//!
//! The symbolic rule walks a layer stack with the cumulative stride `S`:
//! `RF_l = RF_{l-1} + (k_l - 1) S_{l-1}`, `S_l = S_{l-1} s_l`. A spectral
//! filter layer sees the whole input, so it sets the field to the input
//! extent.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{Layer, Mode};
use crate::models::{build_stack, LayerNode, NetworkSpec};
use crate::params::{GradStore, ParamStore};
use crate::rng;
use crate::tensor::Tensor;

/// How a pooling window contributes to the field.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolRf {
    /// The pool only multiplies the stride. This is the convention behind
    /// the usual VGG16 figures (5, 13, 37, 85, 181).
    #[default]
    StrideOnly,
    /// The pool window also widens the field like a `k x k` kernel; this is
    /// what a gradient probe measures.
    Window,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RfLayer {
    /// `None` for the input row.
    pub index: Option<usize>,
    pub kind: String,
    pub kernel: usize,
    /// Cumulative stride after this layer.
    pub jump: usize,
    /// Field `[rows, cols]` in input pixels.
    pub rf: [usize; 2],
    /// The field covers the entire input.
    pub global: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RfReport {
    pub tower: String,
    pub input: [usize; 2],
    pub pool_convention: PoolRf,
    /// Row 0 is the input itself (`RF = 1`).
    pub layers: Vec<RfLayer>,
}

impl RfReport {
    pub fn final_rf(&self) -> [usize; 2] {
        self.layers.last().map_or([1, 1], |l| l.rf)
    }

    /// Field just before each max-pool and at the end of the stack.
    pub fn block_rfs(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate().skip(1) {
            if l.kind == "max_pool" {
                out.push(self.layers[i - 1].rf[0]);
            }
        }
        let last = self.final_rf()[0];
        if self.layers.last().is_some_and(|l| l.kind != "max_pool") {
            out.push(last);
        }
        out
    }
}

/// Receptive field through a stack; stops at the first layer that collapses
/// the spatial grid (global pooling, flatten, dense).
pub fn stack_receptive_field(
    tower: &str,
    nodes: &[LayerNode],
    input: [usize; 2],
    pool: PoolRf,
) -> Result<RfReport> {
    let mut rf = [1usize, 1];
    let mut jump = 1usize;
    let mut global = false;
    let mut layers = vec![RfLayer {
        index: None,
        kind: "input".into(),
        kernel: 1,
        jump,
        rf,
        global,
    }];
    for (i, node) in nodes.iter().enumerate() {
        let (kernel, stride) = match node {
            LayerNode::Conv { kernel, stride, .. } => (*kernel, *stride),
            LayerNode::DepthwiseSeparable { kernel, .. } => (*kernel, 1),
            LayerNode::MaxPool { window } => match pool {
                PoolRf::StrideOnly => (1, *window),
                PoolRf::Window => (*window, *window),
            },
            LayerNode::BatchNorm | LayerNode::Relu | LayerNode::Dropout { .. } => (1, 1),
            LayerNode::SpectralFilter { .. } => {
                global = true;
                rf = input;
                layers.push(RfLayer {
                    index: Some(i),
                    kind: node.kind_name().into(),
                    kernel: 0,
                    jump,
                    rf,
                    global,
                });
                continue;
            }
            LayerNode::GlobalAvgPool | LayerNode::Flatten | LayerNode::Dense { .. } => break,
        };
        if kernel == 0 || stride == 0 {
            return Err(Error::Config(format!("layer {i}: zero kernel or stride")));
        }
        if global {
            rf = input;
        } else {
            rf = rf.map(|r| r + (kernel - 1) * jump);
        }
        jump *= stride;
        layers.push(RfLayer {
            index: Some(i),
            kind: node.kind_name().into(),
            kernel,
            jump,
            rf,
            global,
        });
    }
    Ok(RfReport {
        tower: tower.into(),
        input,
        pool_convention: pool,
        layers,
    })
}

/// One report per tower of the network.
pub fn receptive_field(spec: &NetworkSpec, pool: PoolRf) -> Result<Vec<RfReport>> {
    let input = [spec.input_shape[0], spec.input_shape[1]];
    let mut out = Vec::new();
    for (name, tower) in [("spatial", &spec.spatial), ("spectral", &spec.spectral)] {
        if let Some(nodes) = tower {
            out.push(stack_receptive_field(name, nodes, input, pool)?);
        }
    }
    Ok(out)
}

/// Default cutoff below which a gradient counts as zero.
pub const RF_THRESHOLD: f64 = 1e-12;

/// Input pixels whose gradient reaches output pixel `out_pixel` (channel 0).
///
/// The mask is the union over `probes` random inputs, so ReLU and max-pool
/// sparsity on a single input cannot hide part of the field. The stack runs
/// in evaluation mode. Returns `mask[row][col]`.
#[allow(clippy::too_many_arguments)]
pub fn empirical_rf(
    stack: &mut dyn Layer,
    params: &ParamStore,
    input_shape: [usize; 3],
    out_pixel: (usize, usize),
    threshold: f64,
    probes: usize,
    seed: u64,
) -> Result<Vec<Vec<bool>>> {
    let [h, w, c] = input_shape;
    let out = stack.output_shape(&input_shape)?;
    if out.len() != 3 {
        return Err(Error::InvalidArgument(format!(
            "the stack must keep a spatial grid, output is {out:?}"
        )));
    }
    let (oh, ow, oc) = (out[0], out[1], out[2]);
    if out_pixel.0 >= oh || out_pixel.1 >= ow {
        return Err(Error::InvalidArgument(format!(
            "output pixel {out_pixel:?} outside the {oh}x{ow} output"
        )));
    }
    let mut mask = vec![vec![false; w]; h];
    let mut rng = rng::stream(seed, "empirical_rf");
    let mut params = params.clone();
    for _ in 0..probes.max(1) {
        let x = Tensor::from_fn(&[1, h, w, c], |_| rng.random_range(-1.0..1.0));
        stack.forward(&mut params, &x, Mode::Eval)?;
        let mut up = Tensor::zeros(&[1, oh, ow, oc]);
        up.set(&[0, out_pixel.0, out_pixel.1, 0], 1.0);
        let dx = stack.backward(&params, &up, &mut GradStore::new())?;
        for (i, row) in mask.iter_mut().enumerate() {
            for (j, m) in row.iter_mut().enumerate() {
                let g = (0..c).map(|ch| dx.get(&[0, i, j, ch]).abs()).fold(0.0, f64::max);
                *m |= g > threshold;
            }
        }
    }
    Ok(mask)
}

/// [`empirical_rf`] on a freshly initialized stack built from `nodes`.
pub fn empirical_rf_of_nodes(
    nodes: &[LayerNode],
    input_shape: [usize; 3],
    out_pixel: (usize, usize),
    seed: u64,
) -> Result<Vec<Vec<bool>>> {
    let mut params = ParamStore::new();
    let mut stack = build_stack("probe", nodes, &input_shape, &mut params, seed)?;
    empirical_rf(&mut stack, &params, input_shape, out_pixel, RF_THRESHOLD, 8, seed)
}

/// Bounding box `(rows, cols)` of the true entries, `None` if there are none.
pub fn mask_extent(mask: &[Vec<bool>]) -> Option<(std::ops::Range<usize>, std::ops::Range<usize>)> {
    let rows: Vec<usize> = (0..mask.len()).filter(|&i| mask[i].iter().any(|&m| m)).collect();
    let cols: Vec<usize> = (0..mask.first().map_or(0, Vec::len))
        .filter(|&j| mask.iter().any(|r| r[j]))
        .collect();
    Some((
        *rows.first()?..rows.last()? + 1,
        *cols.first()?..cols.last()? + 1,
    ))
}
