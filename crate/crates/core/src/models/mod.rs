//! Network assembly: single-tower baselines and the fused two-tower model.

mod checkpoint;
mod spec;

pub use checkpoint::{CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use spec::{
    family_spec, s3fnet_spec, spatial_baseline_spec, spatial_tower, spectral_tower,
    spectranet_spec, trace_shapes, vgg16_spec, ArchConfig, LayerNode, ModelFamily, NetworkSpec,
};

use crate::error::{shape_err, Result};
use crate::fusion::FusionHead;
use crate::layers::{
    BatchNorm, Conv2d, Dense, DepthwiseSeparableBlock, Dropout, Flatten, GlobalAvgPool, Layer,
    MaxPool2d, Mode, Relu, Sequential,
};
use crate::params::{GradStore, ParamStore};
use crate::spectral::SpectralFilter;
use crate::tensor::{softmax_rows, Tensor};

/// Pre-fusion tower outputs. A single-tower model fills only its own side.
#[derive(Clone, Debug, PartialEq)]
pub struct BranchVectors {
    /// `[B, d_s]`
    pub v_s: Option<Tensor>,
    /// `[B, d_f]`
    pub v_f: Option<Tensor>,
}

/// Zeroes one tower's vector at the fusion point.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Ablation {
    #[default]
    None,
    ZeroSpatial,
    ZeroSpectral,
}

/// Builds a layer stack from nodes; parameters are named
/// `{prefix}.{index}_{kind}.*`.
pub fn build_stack(
    prefix: &str,
    nodes: &[LayerNode],
    input: &[usize],
    params: &mut ParamStore,
    seed: u64,
) -> Result<Sequential> {
    let shapes = trace_shapes(nodes, input)?;
    let mut seq = Sequential::new(prefix);
    for (i, node) in nodes.iter().enumerate() {
        let name = format!("{prefix}.{i}_{}", node.kind_name());
        let s = &shapes[i];
        let layer: Box<dyn Layer> = match node {
            LayerNode::Conv {
                kernel,
                stride,
                out_channels,
                padding,
                bias,
                ..
            } => Box::new(Conv2d::new(
                name,
                *kernel,
                *stride,
                *padding,
                s[2],
                *out_channels,
                *bias,
                params,
                seed,
            )),
            LayerNode::BatchNorm => Box::new(BatchNorm::new(name, *s.last().unwrap(), params)),
            LayerNode::Relu => Box::new(Relu::new(name)),
            LayerNode::MaxPool { window } => Box::new(MaxPool2d::new(name, *window)),
            LayerNode::Dropout { rate } => Box::new(Dropout::new(name, *rate, seed)?),
            LayerNode::DepthwiseSeparable {
                kernel,
                out_channels,
                norm,
            } => Box::new(DepthwiseSeparableBlock::new(
                name,
                *kernel,
                s[2],
                *out_channels,
                *norm,
                params,
                seed,
            )),
            LayerNode::SpectralFilter { out_channels, init } => Box::new(SpectralFilter::new(
                name,
                s[2],
                *out_channels,
                s[0],
                s[1],
                *init,
                params,
                seed,
            )?),
            LayerNode::GlobalAvgPool => Box::new(GlobalAvgPool::new(name)),
            LayerNode::Flatten => Box::new(Flatten::new(name)),
            LayerNode::Dense { units } => {
                Box::new(Dense::new(name, s[0], *units, params, seed))
            }
        };
        seq.push_boxed(layer);
    }
    Ok(seq)
}

#[derive(Debug)]
pub struct Model {
    spec: NetworkSpec,
    params: ParamStore,
    spatial: Option<Sequential>,
    spectral: Option<Sequential>,
    fusion: Option<FusionHead>,
    head: Sequential,
    d_s: usize,
    d_f: usize,
    ablation: Ablation,
}

impl Model {
    pub fn new(spec: NetworkSpec) -> Result<Self> {
        let (d_s, d_f) = spec.validate()?;
        let mut params = ParamStore::new();
        let input = spec.input_shape.to_vec();
        let spatial = spec
            .spatial
            .as_ref()
            .map(|n| build_stack("spatial", n, &input, &mut params, spec.seed))
            .transpose()?;
        let spectral = spec
            .spectral
            .as_ref()
            .map(|n| build_stack("spectral", n, &input, &mut params, spec.seed))
            .transpose()?;
        let head_in = match (spec.fusion, &spatial, &spectral) {
            (Some(kind), _, _) => vec![kind.output_dim(d_s, d_f)],
            (None, Some(t), _) | (None, None, Some(t)) => t.output_shape(&input)?,
            (None, None, None) => unreachable!("validated"),
        };
        let head = build_stack("head", &spec.head, &head_in, &mut params, spec.seed)?;
        let fusion = spec.fusion.map(FusionHead::new);
        Ok(Self {
            spec,
            params,
            spatial,
            spectral,
            fusion,
            head,
            d_s,
            d_f,
            ablation: Ablation::None,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// `(d_s, d_f)`; 0 for an absent tower.
    pub fn branch_dims(&self) -> (usize, usize) {
        (self.d_s, self.d_f)
    }

    pub fn n_classes(&self) -> usize {
        self.spec.n_classes
    }

    pub fn is_fused(&self) -> bool {
        self.fusion.is_some()
    }

    pub fn set_ablation(&mut self, ablation: Ablation) {
        self.ablation = ablation;
    }

    pub fn ablation(&self) -> Ablation {
        self.ablation
    }

    /// Trainable parameter count of the entries whose name starts with
    /// `prefix` (empty prefix: whole model).
    pub fn param_count(&self, prefix: &str) -> usize {
        self.params
            .iter()
            .filter(|(n, p)| n.starts_with(prefix) && p.kind.trainable())
            .map(|(_, p)| p.value.len())
            .sum()
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let [h, w, c] = self.spec.input_shape;
        let s = x.shape();
        if s.len() != 4 || s[1..] != [h, w, c] || s[0] == 0 {
            return shape_err(format!(
                "model `{}` expects [B, {h}, {w}, {c}] input, got {s:?}",
                self.spec.name
            ));
        }
        Ok(())
    }

    fn ablate(&self, v_s: Tensor, v_f: Tensor) -> (Tensor, Tensor) {
        match self.ablation {
            Ablation::None => (v_s, v_f),
            Ablation::ZeroSpatial => (Tensor::zeros(v_s.shape()), v_f),
            Ablation::ZeroSpectral => (v_s, Tensor::zeros(v_f.shape())),
        }
    }

    /// Training-path forward; caches what [`Model::backward`] needs.
    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        self.check_input(x)?;
        let params = &mut self.params;
        let z = match (&mut self.spatial, &mut self.spectral, &mut self.fusion) {
            (Some(s), Some(f), Some(fusion)) => {
                let v_s = s.forward(params, x, mode)?;
                let v_f = f.forward(params, x, mode)?;
                let (v_s, v_f) = match self.ablation {
                    Ablation::None => (v_s, v_f),
                    Ablation::ZeroSpatial => (Tensor::zeros(v_s.shape()), v_f),
                    Ablation::ZeroSpectral => (v_s, Tensor::zeros(v_f.shape())),
                };
                fusion.forward(&v_s, &v_f)?
            }
            (Some(t), None, None) | (None, Some(t), None) => t.forward(params, x, mode)?,
            _ => unreachable!("validated"),
        };
        self.head.forward(params, &z, mode)
    }

    /// Backpropagates `dlogits` through the last [`Model::forward`]; returns
    /// the parameter gradients and the gradient w.r.t. the input.
    pub fn backward(&mut self, dlogits: &Tensor) -> Result<(GradStore, Tensor)> {
        let mut grads = GradStore::new();
        let params = &self.params;
        let dz = self.head.backward(params, dlogits, &mut grads)?;
        let dx = match (&mut self.spatial, &mut self.spectral, &mut self.fusion) {
            (Some(s), Some(f), Some(fusion)) => {
                let (mut dvs, mut dvf) = fusion.backward(&dz)?;
                match self.ablation {
                    Ablation::None => {}
                    Ablation::ZeroSpatial => dvs = Tensor::zeros(dvs.shape()),
                    Ablation::ZeroSpectral => dvf = Tensor::zeros(dvf.shape()),
                }
                let dxs = s.backward(params, &dvs, &mut grads)?;
                let dxf = f.backward(params, &dvf, &mut grads)?;
                dxs.add(&dxf)?
            }
            (Some(t), None, None) | (None, Some(t), None) => t.backward(params, &dz, &mut grads)?,
            _ => unreachable!("validated"),
        };
        Ok((grads, dx))
    }

    /// Pre-fusion tower outputs in inference mode.
    pub fn extract_branch_vectors(&self, x: &Tensor) -> Result<BranchVectors> {
        self.check_input(x)?;
        let run = |t: &Option<Sequential>| t.as_ref().map(|t| t.infer(&self.params, x)).transpose();
        Ok(BranchVectors {
            v_s: run(&self.spatial)?,
            v_f: run(&self.spectral)?,
        })
    }

    /// Fusion (with the active ablation) and head on already extracted
    /// vectors.
    pub fn logits_from_branches(&self, bv: &BranchVectors) -> Result<Tensor> {
        let z = match (&self.fusion, &bv.v_s, &bv.v_f) {
            (Some(fusion), Some(v_s), Some(v_f)) => {
                let (v_s, v_f) = self.ablate(v_s.clone(), v_f.clone());
                fusion.apply(&v_s, &v_f)?
            }
            (None, Some(v), None) | (None, None, Some(v)) => v.clone(),
            _ => {
                return shape_err(format!(
                    "branch vectors do not match the towers of `{}`",
                    self.spec.name
                ))
            }
        };
        self.head.infer(&self.params, &z)
    }

    /// Inference-mode logits; read-only over the model.
    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        self.logits_from_branches(&self.extract_branch_vectors(x)?)
    }

    /// Class probabilities, `softmax(infer(x))`.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        softmax_rows(&self.infer(x)?)
    }

    /// Inference over a large input in chunks of `batch` samples.
    pub fn predict_batched(&self, x: &Tensor, batch: usize) -> Result<Tensor> {
        self.check_input(x)?;
        let n = x.shape()[0];
        let per = x.len() / n;
        let mut out = Vec::with_capacity(n * self.spec.n_classes);
        for start in (0..n).step_by(batch.max(1)) {
            let end = (start + batch.max(1)).min(n);
            let mut shape = x.shape().to_vec();
            shape[0] = end - start;
            let chunk = Tensor::new(shape, x.data()[start * per..end * per].to_vec())?;
            out.extend_from_slice(self.predict(&chunk)?.data());
        }
        Tensor::new(vec![n, self.spec.n_classes], out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::FusionKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tiny_arch() -> ArchConfig {
        ArchConfig {
            widths: vec![4, 4],
            d_s: 6,
            spectral_filters: vec![3, 4],
            summarizer_widths: vec![4],
            funnel_width: 5,
            ..ArchConfig::default()
        }
    }

    fn input(b: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(&[b, 8, 8, 1], |_| rng.random_range(0.0..1.0))
    }

    #[test]
    fn predict_rows_are_distributions() {
        let spec = family_spec(ModelFamily::S3fBilinear, [8, 8, 1], 3, &tiny_arch(), 1).unwrap();
        let m = Model::new(spec).unwrap();
        let p = m.predict(&input(4, 0)).unwrap();
        for row in p.data().chunks(3) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
        assert_eq!(m.infer(&input(4, 0)).unwrap(), m.infer(&input(4, 0)).unwrap());
    }

    #[test]
    fn wrong_input_shape_is_rejected() {
        let spec = family_spec(ModelFamily::Spectranet1, [8, 8, 1], 2, &tiny_arch(), 1).unwrap();
        let m = Model::new(spec).unwrap();
        assert!(matches!(
            m.infer(&Tensor::zeros(&[2, 8, 8, 2])),
            Err(crate::Error::InvalidShape(_))
        ));
    }

    #[test]
    fn eval_forward_matches_infer() {
        let spec = family_spec(ModelFamily::S3fConcat, [8, 8, 1], 2, &tiny_arch(), 3).unwrap();
        let mut m = Model::new(spec).unwrap();
        let x = input(3, 5);
        let a = m.forward(&x, Mode::Eval).unwrap();
        assert_eq!(a, m.infer(&x).unwrap());
    }

    #[test]
    fn spectral_ablation_removes_spectral_dependence() {
        let spec = family_spec(ModelFamily::S3fConcat, [8, 8, 1], 2, &tiny_arch(), 3).unwrap();
        let mut m = Model::new(spec).unwrap();
        m.set_ablation(Ablation::ZeroSpectral);
        let x = input(2, 9);
        let before = m.infer(&x).unwrap();
        for (name, p) in m.params_mut().iter_mut() {
            if name.starts_with("spectral.") {
                p.value = p.value.map(|v| v * 3.0 + 0.1);
            }
        }
        assert_eq!(before, m.infer(&x).unwrap());
        assert_eq!(m.spec().fusion, Some(FusionKind::Concat));
    }
}
