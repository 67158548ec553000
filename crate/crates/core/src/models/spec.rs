//! Declarative network descriptions and the canonical architectures.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::FusionKind;
use crate::layers::{ConvGeometry, Padding};
use crate::spectral::SpectralInit;

fn one() -> usize {
    1
}
fn two() -> usize {
    2
}
fn three() -> usize {
    3
}
fn yes() -> bool {
    true
}

/// One entry of a layer stack. Input channel counts are inferred by chaining
/// shapes; `in_channels`, when given, is checked.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerNode {
    Conv {
        #[serde(default = "three")]
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
        out_channels: usize,
        #[serde(default)]
        padding: Padding,
        #[serde(default = "yes")]
        bias: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        in_channels: Option<usize>,
    },
    BatchNorm,
    Relu,
    MaxPool {
        #[serde(default = "two")]
        window: usize,
    },
    Dropout {
        rate: f64,
    },
    DepthwiseSeparable {
        #[serde(default = "three")]
        kernel: usize,
        out_channels: usize,
        #[serde(default = "yes")]
        norm: bool,
    },
    SpectralFilter {
        out_channels: usize,
        #[serde(default)]
        init: SpectralInit,
    },
    GlobalAvgPool,
    Flatten,
    Dense {
        units: usize,
    },
}

impl LayerNode {
    pub fn conv(kernel: usize, out_channels: usize) -> Self {
        LayerNode::Conv {
            kernel,
            stride: 1,
            out_channels,
            padding: Padding::Same,
            bias: true,
            in_channels: None,
        }
    }

    pub fn conv_valid(kernel: usize, stride: usize, out_channels: usize) -> Self {
        LayerNode::Conv {
            kernel,
            stride,
            out_channels,
            padding: Padding::Valid,
            bias: true,
            in_channels: None,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerNode::Conv { .. } => "conv",
            LayerNode::BatchNorm => "batch_norm",
            LayerNode::Relu => "relu",
            LayerNode::MaxPool { .. } => "max_pool",
            LayerNode::Dropout { .. } => "dropout",
            LayerNode::DepthwiseSeparable { .. } => "depthwise_separable",
            LayerNode::SpectralFilter { .. } => "spectral_filter",
            LayerNode::GlobalAvgPool => "global_avg_pool",
            LayerNode::Flatten => "flatten",
            LayerNode::Dense { .. } => "dense",
        }
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let bad = |msg: String| -> Result<Vec<usize>> {
            Err(Error::Config(format!("{} layer: {msg}", self.kind_name())))
        };
        let spatial = |input: &[usize]| -> Option<(usize, usize, usize)> {
            (input.len() == 3).then(|| (input[0], input[1], input[2]))
        };
        match self {
            LayerNode::Conv {
                kernel,
                stride,
                out_channels,
                padding,
                in_channels,
                ..
            } => {
                let Some((h, w, c)) = spatial(input) else {
                    return bad(format!("expects [H, W, C] input, got {input:?}"));
                };
                if let Some(ic) = in_channels {
                    if *ic != c {
                        return bad(format!("declared {ic} input channels but receives {c}"));
                    }
                }
                if *out_channels == 0 {
                    return bad("out_channels must be positive".into());
                }
                let g = ConvGeometry::new(h, w, *kernel, *stride, *padding)
                    .map_err(|e| Error::Config(format!("conv layer: {e}")))?;
                Ok(vec![g.out_h, g.out_w, *out_channels])
            }
            LayerNode::BatchNorm | LayerNode::Relu => Ok(input.to_vec()),
            LayerNode::Dropout { rate } => {
                if !(0.0..1.0).contains(rate) {
                    return bad(format!("rate must be in [0, 1), got {rate}"));
                }
                Ok(input.to_vec())
            }
            LayerNode::MaxPool { window } => {
                let Some((h, w, c)) = spatial(input) else {
                    return bad(format!("expects [H, W, C] input, got {input:?}"));
                };
                if *window == 0 || h < *window || w < *window {
                    return bad(format!("window {window} cannot pool {h}x{w}"));
                }
                Ok(vec![h / window, w / window, c])
            }
            LayerNode::DepthwiseSeparable {
                kernel,
                out_channels,
                ..
            } => {
                let Some((h, w, _)) = spatial(input) else {
                    return bad(format!("expects [H, W, C] input, got {input:?}"));
                };
                if *kernel == 0 || *out_channels == 0 {
                    return bad("kernel and out_channels must be positive".into());
                }
                Ok(vec![h, w, *out_channels])
            }
            LayerNode::SpectralFilter { out_channels, .. } => {
                let Some((h, w, _)) = spatial(input) else {
                    return bad(format!("expects [H, W, C] input, got {input:?}"));
                };
                if *out_channels == 0 {
                    return bad("out_channels must be positive".into());
                }
                Ok(vec![h, w, *out_channels])
            }
            LayerNode::GlobalAvgPool => match spatial(input) {
                Some((_, _, c)) => Ok(vec![c]),
                None => bad(format!("expects [H, W, C] input, got {input:?}")),
            },
            LayerNode::Flatten => Ok(vec![input.iter().product()]),
            LayerNode::Dense { units } => {
                if input.len() != 1 {
                    return bad(format!("expects a flat feature vector, got {input:?}"));
                }
                if *units == 0 {
                    return bad("units must be positive".into());
                }
                Ok(vec![*units])
            }
        }
    }
}

/// Per-sample shapes through a stack: `shapes[i]` is the input of layer `i`,
/// the last entry is the stack output.
pub fn trace_shapes(nodes: &[LayerNode], input: &[usize]) -> Result<Vec<Vec<usize>>> {
    let mut shapes = vec![input.to_vec()];
    for (i, node) in nodes.iter().enumerate() {
        let next = node
            .output_shape(shapes.last().unwrap())
            .map_err(|e| Error::Config(format!("layer {i}: {e}")))?;
        shapes.push(next);
    }
    Ok(shapes)
}

/// A whole network: up to two towers that each see the full input, an
/// optional fusion step, and a head.
///
/// * one tower, no fusion: `input -> tower -> head`;
/// * two towers: `input -> spatial`, `input -> spectral`, fused, `-> head`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub name: String,
    /// `[height, width, channels]`.
    pub input_shape: [usize; 3],
    pub n_classes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spatial: Option<Vec<LayerNode>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectral: Option<Vec<LayerNode>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fusion: Option<FusionKind>,
    #[serde(default)]
    pub head: Vec<LayerNode>,
    /// Seeds weight initialization and dropout masks.
    #[serde(default)]
    pub seed: u64,
}

impl NetworkSpec {
    pub fn is_fused(&self) -> bool {
        self.fusion.is_some()
    }

    /// Checks the structural invariants and the shape chain; returns the
    /// per-sample widths `(d_s, d_f)` of the tower outputs (0 for an absent
    /// tower).
    pub fn validate(&self) -> Result<(usize, usize)> {
        let [h, w, c] = self.input_shape;
        if h == 0 || w == 0 || c == 0 {
            return Err(Error::Config(format!(
                "input shape must be positive, got {:?}",
                self.input_shape
            )));
        }
        if self.n_classes < 2 {
            return Err(Error::Config(format!(
                "need at least 2 classes, got {}",
                self.n_classes
            )));
        }
        let both = self.spatial.is_some() && self.spectral.is_some();
        if both != self.fusion.is_some() {
            return Err(Error::Config(
                "fusion must be given exactly when both towers are present".into(),
            ));
        }
        if self.spatial.is_none() && self.spectral.is_none() {
            return Err(Error::Config("a network needs at least one tower".into()));
        }
        let input = self.input_shape.to_vec();
        let tower_out = |nodes: &Option<Vec<LayerNode>>, label: &str| -> Result<Vec<usize>> {
            match nodes {
                Some(n) => trace_shapes(n, &input)
                    .map(|s| s.last().unwrap().clone())
                    .map_err(|e| Error::Config(format!("{label} tower: {e}"))),
                None => Ok(vec![]),
            }
        };
        let s_out = tower_out(&self.spatial, "spatial")?;
        let f_out = tower_out(&self.spectral, "spectral")?;
        let head_in = match self.fusion {
            Some(kind) => {
                if s_out.len() != 1 || f_out.len() != 1 {
                    return Err(Error::Config(format!(
                        "fused towers must end in flat vectors, got {s_out:?} and {f_out:?}"
                    )));
                }
                vec![kind.output_dim(s_out[0], f_out[0])]
            }
            None => {
                if s_out.is_empty() {
                    f_out.clone()
                } else {
                    s_out.clone()
                }
            }
        };
        let out = trace_shapes(&self.head, &head_in)
            .map_err(|e| Error::Config(format!("head: {e}")))?;
        let last = out.last().unwrap();
        if last != &[self.n_classes] {
            return Err(Error::Config(format!(
                "network output is {last:?}, expected [{}]",
                self.n_classes
            )));
        }
        let width = |v: &Vec<usize>| if v.len() == 1 { v[0] } else { 0 };
        Ok((width(&s_out), width(&f_out)))
    }

    /// Stable content hash (hex SHA-256 of the canonical JSON encoding).
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let bytes = serde_json::to_vec(self).expect("spec serializes");
        Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelFamily {
    Spatial,
    Spectranet1,
    Spectranet2,
    S3fConcat,
    S3fBilinear,
}

impl std::str::FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_owned())).map_err(|_| {
            Error::Config(format!(
                "unknown model family `{s}` (expected spatial, spectranet1, spectranet2, s3f-concat or s3f-bilinear)"
            ))
        })
    }
}

/// Architecture knobs. The defaults below are choices where the reference
/// design leaves the value open: spatial widths, `d_s`, the spatial dropout,
/// the summarizer widths and funnel width, and pooling between the two
/// filter layers of the two-layer spectral variant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchConfig {
    /// Channel width of each two-conv spatial block.
    pub widths: Vec<usize>,
    /// Width of the spatial tower's output vector.
    pub d_s: usize,
    pub spatial_dropout: f64,
    /// Filter counts of the spectral layers (one entry per layer).
    pub spectral_filters: Vec<usize>,
    pub spectral_init: SpectralInit,
    /// Output widths of the depthwise-separable summarizer stages.
    pub summarizer_widths: Vec<usize>,
    pub funnel_width: usize,
    /// Width of the spectral tower's output vector.
    pub d_f: usize,
    pub funnel_dropout: f64,
    /// Insert a 2x max-pool between stacked spectral layers.
    pub pool_between_spectral: bool,
    /// Which spectral variant a fused model uses (1 or 2).
    pub spectranet_variant: u8,
    /// Signed square root and L2 normalization after bilinear fusion.
    pub bilinear_normalize: bool,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            widths: vec![32, 64, 128, 256],
            d_s: 64,
            spatial_dropout: 0.0,
            spectral_filters: vec![32],
            spectral_init: SpectralInit::default(),
            summarizer_widths: vec![32, 48, 64],
            funnel_width: 16,
            d_f: 4,
            funnel_dropout: 0.1875,
            pool_between_spectral: true,
            spectranet_variant: 1,
            bilinear_normalize: true,
        }
    }
}

impl ArchConfig {
    fn spectral_filters_for(&self, variant: u8) -> Result<Vec<usize>> {
        match variant {
            1 => Ok(vec![*self.spectral_filters.first().unwrap_or(&32)]),
            2 => {
                if self.spectral_filters.len() >= 2 {
                    Ok(self.spectral_filters[..2].to_vec())
                } else {
                    Ok(vec![32, 64])
                }
            }
            v => Err(Error::Config(format!(
                "unknown spectral variant {v} (expected 1 or 2)"
            ))),
        }
    }
}

/// Four (or `widths.len()`) blocks of `[conv, BN, ReLU, conv, BN, ReLU,
/// max-pool, dropout]`, global average pooling, then `dense(d_s) + ReLU`.
pub fn spatial_tower(input_shape: [usize; 3], arch: &ArchConfig) -> Result<Vec<LayerNode>> {
    let factor = 1usize << arch.widths.len();
    if arch.widths.is_empty() || !input_shape[0].is_multiple_of(factor) || !input_shape[1].is_multiple_of(factor) {
        return Err(Error::Config(format!(
            "spatial tower with {} blocks needs input sides divisible by {factor}, got {}x{}",
            arch.widths.len(),
            input_shape[0],
            input_shape[1]
        )));
    }
    let mut nodes = Vec::new();
    for &w in &arch.widths {
        nodes.extend([
            LayerNode::conv(3, w),
            LayerNode::BatchNorm,
            LayerNode::Relu,
            LayerNode::conv(3, w),
            LayerNode::BatchNorm,
            LayerNode::Relu,
            LayerNode::MaxPool { window: 2 },
            LayerNode::Dropout {
                rate: arch.spatial_dropout,
            },
        ]);
    }
    nodes.extend([
        LayerNode::GlobalAvgPool,
        LayerNode::Dense { units: arch.d_s },
        LayerNode::Relu,
    ]);
    Ok(nodes)
}

/// Spectral layer(s) at full resolution, `[depthwise-separable block,
/// max-pool]` per summarizer stage, flatten, and the two-layer funnel
/// `dense(funnel) -> ReLU -> dropout -> dense(d_f) -> ReLU`.
pub fn spectral_tower(
    variant: u8,
    input_shape: [usize; 3],
    arch: &ArchConfig,
) -> Result<Vec<LayerNode>> {
    let filters = arch.spectral_filters_for(variant)?;
    let mut nodes = Vec::new();
    for (i, &f) in filters.iter().enumerate() {
        if i > 0 && arch.pool_between_spectral {
            nodes.push(LayerNode::MaxPool { window: 2 });
        }
        nodes.push(LayerNode::SpectralFilter {
            out_channels: f,
            init: arch.spectral_init,
        });
    }
    for &w in &arch.summarizer_widths {
        nodes.push(LayerNode::DepthwiseSeparable {
            kernel: 3,
            out_channels: w,
            norm: true,
        });
        nodes.push(LayerNode::MaxPool { window: 2 });
    }
    nodes.extend([
        LayerNode::Flatten,
        LayerNode::Dense {
            units: arch.funnel_width,
        },
        LayerNode::Relu,
        LayerNode::Dropout {
            rate: arch.funnel_dropout,
        },
        LayerNode::Dense { units: arch.d_f },
        LayerNode::Relu,
    ]);
    trace_shapes(&nodes, &input_shape)?;
    Ok(nodes)
}

pub fn spatial_baseline_spec(
    input_shape: [usize; 3],
    n_classes: usize,
    arch: &ArchConfig,
) -> Result<NetworkSpec> {
    let spec = NetworkSpec {
        name: "spatial-baseline".into(),
        input_shape,
        n_classes,
        spatial: Some(spatial_tower(input_shape, arch)?),
        spectral: None,
        fusion: None,
        head: vec![LayerNode::Dense { units: n_classes }],
        seed: 0,
    };
    spec.validate()?;
    Ok(spec)
}

pub fn spectranet_spec(
    variant: u8,
    input_shape: [usize; 3],
    n_classes: usize,
    arch: &ArchConfig,
) -> Result<NetworkSpec> {
    let spec = NetworkSpec {
        name: format!("spectranet-{variant}"),
        input_shape,
        n_classes,
        spatial: None,
        spectral: Some(spectral_tower(variant, input_shape, arch)?),
        fusion: None,
        head: vec![LayerNode::Dense { units: n_classes }],
        seed: 0,
    };
    spec.validate()?;
    Ok(spec)
}

pub fn s3fnet_spec(
    spatial: Vec<LayerNode>,
    spectral: Vec<LayerNode>,
    fusion: FusionKind,
    input_shape: [usize; 3],
    n_classes: usize,
) -> Result<NetworkSpec> {
    let name = match fusion {
        FusionKind::Concat => "s3fnet-concat",
        FusionKind::Bilinear { .. } => "s3fnet-bilinear",
    };
    let spec = NetworkSpec {
        name: name.into(),
        input_shape,
        n_classes,
        spatial: Some(spatial),
        spectral: Some(spectral),
        fusion: Some(fusion),
        head: vec![LayerNode::Dense { units: n_classes }],
        seed: 0,
    };
    spec.validate()?;
    Ok(spec)
}

pub fn family_spec(
    family: ModelFamily,
    input_shape: [usize; 3],
    n_classes: usize,
    arch: &ArchConfig,
    seed: u64,
) -> Result<NetworkSpec> {
    let mut spec = match family {
        ModelFamily::Spatial => spatial_baseline_spec(input_shape, n_classes, arch)?,
        ModelFamily::Spectranet1 => spectranet_spec(1, input_shape, n_classes, arch)?,
        ModelFamily::Spectranet2 => spectranet_spec(2, input_shape, n_classes, arch)?,
        ModelFamily::S3fConcat | ModelFamily::S3fBilinear => {
            let fusion = if family == ModelFamily::S3fConcat {
                FusionKind::Concat
            } else {
                FusionKind::Bilinear {
                    normalize: arch.bilinear_normalize,
                }
            };
            s3fnet_spec(
                spatial_tower(input_shape, arch)?,
                spectral_tower(arch.spectranet_variant, input_shape, arch)?,
                fusion,
                input_shape,
                n_classes,
            )?
        }
    };
    spec.seed = seed;
    Ok(spec)
}

/// The VGG16 convolutional stack (13 3x3 convs in blocks of 2-2-3-3-3 with
/// 2x2 pooling between blocks) on 224x224 RGB input.
pub fn vgg16_spec() -> NetworkSpec {
    let mut nodes = Vec::new();
    for (i, (convs, width)) in [(2, 64), (2, 128), (3, 256), (3, 512), (3, 512)]
        .into_iter()
        .enumerate()
    {
        for _ in 0..convs {
            nodes.push(LayerNode::conv(3, width));
            nodes.push(LayerNode::Relu);
        }
        if i < 4 {
            nodes.push(LayerNode::MaxPool { window: 2 });
        }
    }
    nodes.extend([
        LayerNode::MaxPool { window: 2 },
        LayerNode::Flatten,
        LayerNode::Dense { units: 4096 },
        LayerNode::Relu,
        LayerNode::Dense { units: 4096 },
        LayerNode::Relu,
    ]);
    NetworkSpec {
        name: "vgg16".into(),
        input_shape: [224, 224, 3],
        n_classes: 1000,
        spatial: Some(nodes),
        spectral: None,
        fusion: None,
        head: vec![LayerNode::Dense { units: 1000 }],
        seed: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_build_valid_specs() {
        let arch = ArchConfig::default();
        for family in [
            ModelFamily::Spatial,
            ModelFamily::Spectranet1,
            ModelFamily::Spectranet2,
            ModelFamily::S3fConcat,
            ModelFamily::S3fBilinear,
        ] {
            let spec = family_spec(family, [32, 32, 1], 4, &arch, 0).unwrap();
            let (ds, df) = spec.validate().unwrap();
            match family {
                ModelFamily::Spatial => assert_eq!((ds, df), (64, 0)),
                ModelFamily::Spectranet1 | ModelFamily::Spectranet2 => assert_eq!((ds, df), (0, 4)),
                _ => assert_eq!((ds, df), (64, 4)),
            }
        }
        assert!(vgg16_spec().validate().is_ok());
    }

    #[test]
    fn funnel_carries_the_fixed_dropout() {
        let nodes = spectral_tower(1, [32, 32, 1], &ArchConfig::default()).unwrap();
        let rates: Vec<f64> = nodes
            .iter()
            .filter_map(|n| match n {
                LayerNode::Dropout { rate } => Some(*rate),
                _ => None,
            })
            .collect();
        assert_eq!(rates, vec![0.1875]);
        assert_eq!(nodes.last(), Some(&LayerNode::Relu));
    }

    #[test]
    fn structural_errors_are_config_errors() {
        let arch = ArchConfig::default();
        assert!(matches!(
            spatial_baseline_spec([24, 24, 1], 2, &arch),
            Err(Error::Config(_))
        ));
        let mut spec = family_spec(ModelFamily::S3fConcat, [32, 32, 1], 2, &arch, 0).unwrap();
        spec.fusion = None;
        assert!(matches!(spec.validate(), Err(Error::Config(_))));
        let mut arch2 = arch.clone();
        arch2.spectranet_variant = 3;
        assert!(family_spec(ModelFamily::S3fConcat, [32, 32, 1], 2, &arch2, 0).is_err());
        assert!("resnet".parse::<ModelFamily>().is_err());
        assert_eq!("s3f-bilinear".parse::<ModelFamily>().unwrap(), ModelFamily::S3fBilinear);
    }

    #[test]
    fn json_roundtrip_and_unknown_kind() {
        let spec = family_spec(ModelFamily::S3fBilinear, [16, 16, 1], 3, &ArchConfig::default(), 5)
            .unwrap();
        let text = serde_json::to_string(&spec).unwrap();
        let back: NetworkSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
        assert_eq!(back.hash(), spec.hash());
        let bad = r#"{"kind": "attention", "heads": 4}"#;
        assert!(serde_json::from_str::<LayerNode>(bad).is_err());
    }
}
