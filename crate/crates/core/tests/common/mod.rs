#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use s3fnet::fusion::{FusionHead, FusionKind};
use s3fnet::layers::{Layer, Mode};
use s3fnet::models::{build_stack, family_spec, ArchConfig, LayerNode, Model, ModelFamily};
use s3fnet::params::{GradStore, ParamStore};
use s3fnet::Tensor;

pub const FD_STEP: f64 = 1e-5;

/// `|n - a| / max(|n| + |a|, 1e-6)`; the floor keeps gradients that are
/// zero up to round-off from reporting noise as error.
pub fn rel_err(numerical: f64, analytical: f64) -> f64 {
    rel_err_floor(numerical, analytical, 1e-6)
}

pub fn rel_err_floor(numerical: f64, analytical: f64, floor: f64) -> f64 {
    (numerical - analytical).abs() / (numerical.abs() + analytical.abs()).max(floor)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(shape: &[usize], lo: f64, hi: f64, r: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| r.random_range(lo..hi))
}

/// Central difference of `f` around `x[k]`.
pub fn central_diff(x: &mut [f64], k: usize, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let orig = x[k];
    x[k] = orig + FD_STEP;
    let plus = f(x);
    x[k] = orig - FD_STEP;
    let minus = f(x);
    x[k] = orig;
    (plus - minus) / (2.0 * FD_STEP)
}

/// Worst relative error of one layer stack under the loss `sum(y * r)`,
/// over every input element and every trainable parameter element.
pub fn stack_grad_error(nodes: &[LayerNode], input: &[usize], batch: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut params = ParamStore::new();
    let mut stack = build_stack("t", nodes, input, &mut params, seed).unwrap();
    let mut shape = vec![batch];
    shape.extend_from_slice(input);
    let x = uniform(&shape, -1.0, 1.0, &mut r);
    let mode = Mode::Train { step: seed };
    let y = stack.forward(&mut params, &x, mode).unwrap();
    let up = uniform(y.shape(), -1.0, 1.0, &mut r);
    let mut grads = GradStore::new();
    let dx = stack.backward(&params, &up, &mut grads).unwrap();

    let mut loss = |params: &mut ParamStore, x: &Tensor| {
        let y = stack.forward(params, x, mode).unwrap();
        y.dot(&up).unwrap()
    };
    let mut worst: f64 = 0.0;
    let mut xd = x.data().to_vec();
    for k in 0..xd.len() {
        let n = central_diff(&mut xd, k, |v| {
            loss(&mut params.clone(), &Tensor::new(shape.clone(), v.to_vec()).unwrap())
        });
        worst = worst.max(rel_err(n, dx.data()[k]));
    }
    let names: Vec<String> = params
        .iter()
        .filter(|(_, p)| p.kind.trainable())
        .map(|(n, _)| n.to_string())
        .collect();
    for name in names {
        let len = params.get(&name).unwrap().len();
        for k in 0..len {
            let orig = params.get(&name).unwrap().data()[k];
            let mut at = |v: f64| {
                let mut p = params.clone();
                p.get_mut(&name).unwrap().data_mut()[k] = v;
                loss(&mut p, &x)
            };
            let n = (at(orig + FD_STEP) - at(orig - FD_STEP)) / (2.0 * FD_STEP);
            let a = grads.get(&name).map_or(0.0, |g| g.data()[k]);
            worst = worst.max(rel_err(n, a));
        }
    }
    worst
}

use s3fnet::fft::{irfft2, rfft2, Complex};
use s3fnet::spectral::{spectral_filter_forward, SpectralFilterParams};

/// Literal double sum `F(u, v) = sum f(x, y) exp(-2 pi i (u x / H + v y / W))`
/// over the full plane.
pub fn naive_dft(plane: &[f64], h: usize, w: usize) -> Vec<Complex> {
    let mut out = vec![Complex::new(0.0, 0.0); h * w];
    for u in 0..h {
        for v in 0..w {
            let mut acc = Complex::new(0.0, 0.0);
            for x in 0..h {
                for y in 0..w {
                    let phase = -2.0 * std::f64::consts::PI
                        * ((u * x) as f64 / h as f64 + (v * y) as f64 / w as f64);
                    acc += plane[x * w + y] * Complex::from_polar(1.0, phase);
                }
            }
            out[u * w + v] = acc;
        }
    }
    out
}

/// Max deviation of `rfft2` from the literal DFT plus the roundtrip error
/// of `irfft2`, for one random `h x w` plane.
pub fn fft_oracle_errors(h: usize, w: usize, seed: u64) -> (f64, f64) {
    let x = uniform(&[h, w], -1.0, 1.0, &mut rng(seed));
    let spec = rfft2(&x).unwrap();
    let full = naive_dft(x.data(), h, w);
    let wh = w / 2 + 1;
    let mut fwd: f64 = 0.0;
    for u in 0..h {
        for v in 0..wh {
            fwd = fwd.max((spec.data()[u * wh + v] - full[u * w + v]).norm());
        }
    }
    let back = irfft2(&spec, w).unwrap();
    (fwd, back.max_abs_diff(&x).unwrap())
}

/// Relative gap between `sum |x|^2` and `sum |F|^2 / (H W)`, with the full
/// spectrum rebuilt from the stored half plane by Hermitian symmetry.
pub fn parseval_rel_err(h: usize, w: usize, seed: u64) -> f64 {
    let x = uniform(&[h, w], -1.0, 1.0, &mut rng(seed));
    let spec = rfft2(&x).unwrap();
    let wh = w / 2 + 1;
    let mut energy = 0.0;
    for u in 0..h {
        for v in 0..w {
            let c = if v < wh {
                spec.data()[u * wh + v]
            } else {
                spec.data()[((h - u) % h) * wh + (w - v)].conj()
            };
            energy += c.norm_sqr();
        }
    }
    let lhs: f64 = x.data().iter().map(|v| v * v).sum();
    (lhs - energy / (h * w) as f64).abs() / lhs.max(1e-300)
}

/// `(x * h)[i, j] = sum_{a, b} x[a, b] h[(i - a) mod H, (j - b) mod W]`.
pub fn circular_conv(x: &[f64], k: &[f64], h: usize, w: usize) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    for i in 0..h {
        for j in 0..w {
            let mut acc = 0.0;
            for a in 0..h {
                for b in 0..w {
                    acc += x[a * w + b] * k[((i + h - a) % h) * w + (j + w - b) % w];
                }
            }
            out[i * w + j] = acc;
        }
    }
    out
}

/// Max error of a one-channel filter layer whose weights are `rfft2(k)`
/// against brute-force circular convolution with `k`.
pub fn conv_theorem_error(n: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let x = uniform(&[1, n, n, 1], -1.0, 1.0, &mut r);
    let k = uniform(&[n, n], -1.0, 1.0, &mut r);
    let p = SpectralFilterParams::from_spatial_kernel(&k, 1, 1).unwrap();
    let y = spectral_filter_forward(&x, &p).unwrap();
    let want = circular_conv(x.data(), k.data(), n, n);
    y.data()
        .iter()
        .zip(&want)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

pub const GRAD_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
pub const LAYER_TOL: f64 = 1e-4;
pub const MODEL_TOL: f64 = 1e-3;
/// Differencing a whole network's loss leaves round-off near 1e-9 (biases
/// feeding batch norm have an exact gradient of zero).
pub const MODEL_FLOOR: f64 = 1e-5;

/// `(nodes, per-sample input shape, batch)` for every layer kind.
pub fn layer_cases() -> Vec<(Vec<LayerNode>, Vec<usize>, usize)> {
    use s3fnet::layers::Padding;
    use s3fnet::spectral::SpectralInit;
    let mut cases = vec![
        (vec![LayerNode::conv(3, 4)], vec![5, 6, 2], 2),
        (vec![LayerNode::conv_valid(3, 2, 3)], vec![7, 6, 2], 2),
        (
            vec![LayerNode::Conv {
                kernel: 1,
                stride: 1,
                out_channels: 3,
                padding: Padding::Same,
                bias: false,
                in_channels: Some(2),
            }],
            vec![4, 4, 2],
            2,
        ),
        (vec![LayerNode::BatchNorm], vec![3, 3, 4], 3),
        (vec![LayerNode::Dense { units: 5 }, LayerNode::BatchNorm], vec![6], 4),
        (vec![LayerNode::Relu], vec![4, 4, 2], 2),
        (vec![LayerNode::MaxPool { window: 2 }], vec![4, 6, 2], 2),
        (vec![LayerNode::Dropout { rate: 0.4 }], vec![4, 4, 2], 2),
        (vec![LayerNode::GlobalAvgPool], vec![3, 5, 2], 2),
        (vec![LayerNode::Flatten, LayerNode::Dense { units: 3 }], vec![3, 2, 2], 2),
        (vec![LayerNode::Dense { units: 4 }], vec![7], 3),
    ];
    for norm in [true, false] {
        cases.push((
            vec![LayerNode::DepthwiseSeparable {
                kernel: 3,
                out_channels: 4,
                norm,
            }],
            vec![5, 5, 3],
            2,
        ));
    }
    for init in [SpectralInit::default(), SpectralInit::Direct] {
        for input in [vec![4, 4, 2], vec![5, 6, 2], vec![3, 5, 1]] {
            cases.push((vec![LayerNode::SpectralFilter { out_channels: 2, init }], input, 2));
        }
    }
    cases
}

pub fn cross_entropy_grad_error(seed: u64) -> f64 {
    use s3fnet::train::weighted_cross_entropy;
    let mut r = rng(seed);
    let (b, k) = (5, 4);
    let logits = uniform(&[b, k], -3.0, 3.0, &mut r);
    let labels: Vec<usize> = (0..b).map(|_| r.random_range(0..k)).collect();
    let weights: Vec<f64> = (0..k).map(|_| r.random_range(0.2..3.0)).collect();
    let (_, g) = weighted_cross_entropy(&logits, &labels, &weights).unwrap();
    let mut z = logits.data().to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..z.len() {
        let n = central_diff(&mut z, i, |v| {
            let t = Tensor::new(vec![b, k], v.to_vec()).unwrap();
            weighted_cross_entropy(&t, &labels, &weights).unwrap().0
        });
        worst = worst.max(rel_err(n, g.data()[i]));
    }
    worst
}

/// Draws vectors whose outer product stays away from zero, where the signed
/// square root is not differentiable.
pub fn fusion_inputs(seed: u64, ds: usize, df: usize) -> (Tensor, Tensor) {
    let mut r = rng(seed);
    let mut draw = |n: usize| {
        Tensor::from_fn(&[2, n], |_| {
            let m: f64 = r.random_range(0.2..1.5);
            if r.random_bool(0.5) { m } else { -m }
        })
    };
    (draw(ds), draw(df))
}

pub fn fusion_grad_error(kind: FusionKind, seed: u64) -> f64 {
    let (vs, vf) = fusion_inputs(seed, 3, 4);
    let mut head = FusionHead::new(kind);
    let z = head.forward(&vs, &vf).unwrap();
    if let FusionKind::Bilinear { .. } = kind {
        let p = s3fnet::fusion::outer_product(&vs, &vf).unwrap();
        assert!(p.data().iter().all(|v| v.abs() > 1e-6));
    }
    let up = uniform(z.shape(), -1.0, 1.0, &mut rng(seed + 100));
    let (gs, gf) = head.backward(&up).unwrap();
    let loss = |a: &Tensor, b: &Tensor| FusionHead::new(kind).apply(a, b).unwrap().dot(&up).unwrap();
    let mut worst: f64 = 0.0;
    let mut s = vs.data().to_vec();
    for i in 0..s.len() {
        let n = central_diff(&mut s, i, |v| loss(&Tensor::new(vec![2, 3], v.to_vec()).unwrap(), &vf));
        worst = worst.max(rel_err(n, gs.data()[i]));
    }
    let mut f = vf.data().to_vec();
    for i in 0..f.len() {
        let n = central_diff(&mut f, i, |v| loss(&vs, &Tensor::new(vec![2, 4], v.to_vec()).unwrap()));
        worst = worst.max(rel_err(n, gf.data()[i]));
    }
    worst
}

pub fn tiny_arch() -> ArchConfig {
    ArchConfig {
        widths: vec![4, 4, 4, 4],
        d_s: 5,
        spectral_filters: vec![4, 4],
        summarizer_widths: vec![4, 4],
        funnel_width: 6,
        d_f: 3,
        ..ArchConfig::default()
    }
}

pub const ALL_FAMILIES: [ModelFamily; 5] = [
    ModelFamily::Spatial,
    ModelFamily::Spectranet1,
    ModelFamily::Spectranet2,
    ModelFamily::S3fConcat,
    ModelFamily::S3fBilinear,
];

/// Whole-model check under weighted cross-entropy: three positions (first,
/// middle, last) of every trainable tensor plus a stride through the input.
pub fn model_grad_error(family: ModelFamily, seed: u64) -> f64 {
    use s3fnet::train::weighted_cross_entropy;
    let spec = family_spec(family, [16, 16, 1], 3, &tiny_arch(), seed).unwrap();
    let mut model = Model::new(spec).unwrap();
    let mut r = rng(seed);
    // Biases start at exactly zero; behind a layer whose ReLUs are all off
    // that leaves the next ReLU sitting on its kink.
    for (name, p) in model.params_mut().iter_mut() {
        if name.ends_with(".bias") {
            p.value = uniform(p.value.shape(), -0.1, 0.1, &mut r);
        }
    }
    let x = uniform(&[4, 16, 16, 1], 0.0, 1.0, &mut r);
    let labels = vec![0, 1, 2, 1];
    let weights = [0.7, 1.3, 1.0];
    let mode = Mode::Train { step: seed };
    let logits = model.forward(&x, mode).unwrap();
    let (_, g) = weighted_cross_entropy(&logits, &labels, &weights).unwrap();
    let (grads, dx) = model.backward(&g).unwrap();

    let loss = |m: &mut Model, x: &Tensor| {
        let l = m.forward(x, mode).unwrap();
        weighted_cross_entropy(&l, &labels, &weights).unwrap().0
    };
    let names: Vec<String> = model
        .params()
        .iter()
        .filter(|(_, p)| p.kind.trainable())
        .map(|(n, _)| n.to_string())
        .collect();
    let mut worst: f64 = 0.0;
    for name in &names {
        let len = model.params().get(name).unwrap().len();
        for k in [0, len / 2, len - 1] {
            let orig = model.params().get(name).unwrap().data()[k];
            let mut at = |v: f64| {
                model.params_mut().get_mut(name).unwrap().data_mut()[k] = v;
                loss(&mut model, &x)
            };
            let n = (at(orig + FD_STEP) - at(orig - FD_STEP)) / (2.0 * FD_STEP);
            model.params_mut().get_mut(name).unwrap().data_mut()[k] = orig;
            let a = grads.get(name).map_or(0.0, |g| g.data()[k]);
            worst = worst.max(rel_err_floor(n, a, MODEL_FLOOR));
        }
    }
    let mut xd = x.data().to_vec();
    for k in (0..xd.len()).step_by(37) {
        let n = central_diff(&mut xd, k, |v| {
            loss(&mut model, &Tensor::new(x.shape().to_vec(), v.to_vec()).unwrap())
        });
        worst = worst.max(rel_err_floor(n, dx.data()[k], MODEL_FLOOR));
    }
    worst
}
