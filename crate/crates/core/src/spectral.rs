//! The learnable Fourier-domain filter layer.
//!
//! Each `(input channel, output channel)` pair owns a complex filter
//! `H = W_real + j W_imag` over the half-plane spectrum of the bound input
//! resolution. The forward pass transforms every input channel, multiplies by
//! the filters, sums over input channels, inverts, and adds a per-channel
//! bias in the spatial domain:
//!
//! ```text
//! x [B,H,W,Cin] -> [B,Cin,H,W] -> rfft2 -> X
//! Y[b,f] = sum_c X[b,c] * H[c,f]
//! y = irfft2(Y) -> [B,H,W,Cout] + bias
//! ```
//!
//! Because every output pixel is a weighted sum over every input pixel, one
//! layer already sees the whole image.
//!
//! Backward, with `g` the upstream gradient and `G = rfft2(g)`:
//!
//! * `dL/dH[c,f](u,v) = m(v) / (H W) * sum_b G[b,f] conj(X[b,c])`, where
//!   `m(v)` is 1 on the zero (and, for even widths, the Nyquist) column and 2
//!   elsewhere, i.e. the number of times a stored bin appears in the
//!   Hermitian-extended spectrum;
//! * `dL/dx[b,c] = irfft2(sum_f G[b,f] conj(H[c,f]))`.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::fft::{contract_channels, half_width, irfft2, rfft2, Complex, Spectrum};
use crate::layers::{missing_cache, Layer, Mode};
use crate::params::{GradStore, ParamKind, ParamStore};
use crate::rng;
use crate::tensor::Tensor;

/// How the complex weights start out.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpectralInit {
    /// Spectrum of a zero-padded, origin-centred `kernel x kernel` spatial
    /// filter drawn with He variance `2 / (kernel^2 Cin)`.
    SpatialEquivalent { kernel: usize },
    /// Independent complex Gaussians with `E|H|^2 = 1 / Cin`, which keeps the
    /// output variance of a unit-variance white input near 1 under the
    /// unnormalized-forward transform convention.
    Direct,
}

impl Default for SpectralInit {
    fn default() -> Self {
        SpectralInit::SpatialEquivalent { kernel: 3 }
    }
}

impl std::str::FromStr for SpectralInit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spatial-equivalent" | "spatial_equivalent" => Ok(Self::default()),
            "direct" => Ok(Self::Direct),
            other => Err(Error::Config(format!(
                "unknown spectral init scheme `{other}` (expected spatial-equivalent or direct)"
            ))),
        }
    }
}

/// Weights of one filter layer, bound to an `height x width` input.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralFilterParams {
    pub w_real: Tensor,
    pub w_imag: Tensor,
    pub bias: Tensor,
    pub height: usize,
    pub width: usize,
}

impl SpectralFilterParams {
    pub fn in_channels(&self) -> usize {
        self.w_real.shape()[0]
    }

    pub fn out_channels(&self) -> usize {
        self.w_real.shape()[1]
    }

    /// Sets every filter to the spectrum of the same spatial kernel `h`
    /// (`[height, width]`, origin at index `(0, 0)`).
    pub fn from_spatial_kernel(h: &Tensor, cin: usize, cout: usize) -> Result<Self> {
        h.expect_rank(2, "spatial kernel")?;
        let (height, width) = (h.shape()[0], h.shape()[1]);
        let spec = rfft2(h)?;
        let plane = spec.data().len();
        let mut re = Vec::with_capacity(cin * cout * plane);
        let mut im = Vec::with_capacity(cin * cout * plane);
        for _ in 0..cin * cout {
            re.extend(spec.data().iter().map(|c| c.re));
            im.extend(spec.data().iter().map(|c| c.im));
        }
        let shape = vec![cin, cout, height, half_width(width)];
        Ok(Self {
            w_real: Tensor::new(shape.clone(), re)?,
            w_imag: Tensor::new(shape, im)?,
            bias: Tensor::zeros(&[cout]),
            height,
            width,
        })
    }

    fn filters(&self) -> Result<Spectrum> {
        Spectrum::from_parts(&self.w_real, &self.w_imag, self.width)
    }
}

pub fn init_spectral_weights(
    cin: usize,
    cout: usize,
    height: usize,
    width: usize,
    seed: u64,
    scheme: SpectralInit,
) -> Result<SpectralFilterParams> {
    if cin == 0 || cout == 0 || height == 0 || width == 0 {
        return Err(Error::Config(format!(
            "spectral filter dimensions must be positive, got cin={cin} cout={cout} {height}x{width}"
        )));
    }
    let wh = half_width(width);
    let plane = height * wh;
    let shape = vec![cin, cout, height, wh];
    let (re, im) = match scheme {
        SpectralInit::SpatialEquivalent { kernel } => {
            if kernel == 0 {
                return Err(Error::Config("spatial-equivalent kernel must be positive".into()));
            }
            let std = (2.0 / (kernel * kernel * cin) as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("finite std");
            let mut r = rng::stream(seed, "spectral.spatial_equivalent");
            let mut re = Vec::with_capacity(cin * cout * plane);
            let mut im = Vec::with_capacity(cin * cout * plane);
            let half = kernel / 2;
            for _ in 0..cin * cout {
                let mut padded = Tensor::zeros(&[height, width]);
                for i in 0..kernel {
                    for j in 0..kernel {
                        let v = normal.sample(&mut r);
                        let pi = (i + height * kernel - half) % height;
                        let pj = (j + width * kernel - half) % width;
                        let cur = padded.get(&[pi, pj]);
                        padded.set(&[pi, pj], cur + v);
                    }
                }
                let s = rfft2(&padded)?;
                re.extend(s.data().iter().map(|c| c.re));
                im.extend(s.data().iter().map(|c| c.im));
            }
            (re, im)
        }
        SpectralInit::Direct => {
            let std = (0.5 / cin as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("finite std");
            let mut r = rng::stream(seed, "spectral.direct");
            let n = cin * cout * plane;
            let re: Vec<f64> = (0..n).map(|_| normal.sample(&mut r)).collect();
            let im: Vec<f64> = (0..n).map(|_| normal.sample(&mut r)).collect();
            (re, im)
        }
    };
    Ok(SpectralFilterParams {
        w_real: Tensor::new(shape.clone(), re)?,
        w_imag: Tensor::new(shape, im)?,
        bias: Tensor::zeros(&[cout]),
        height,
        width,
    })
}

fn check_input(x: &Tensor, p: &SpectralFilterParams) -> Result<()> {
    x.expect_rank(4, "spectral filter")?;
    let s = x.shape();
    if s[1] != p.height || s[2] != p.width {
        return shape_err(format!(
            "spectral filter is bound to {}x{} inputs, got {}x{}",
            p.height, p.width, s[1], s[2]
        ));
    }
    if s[3] != p.in_channels() {
        return shape_err(format!(
            "spectral filter expects {} input channels, got {}",
            p.in_channels(),
            s[3]
        ));
    }
    Ok(())
}

fn add_bias_nhwc(y: &mut Tensor, bias: &Tensor) {
    let c = bias.len();
    for row in y.data_mut().chunks_mut(c) {
        for (v, b) in row.iter_mut().zip(bias.data()) {
            *v += b;
        }
    }
}

/// Forward pass; also returns the input spectrum for the backward pass.
fn forward_with_spectrum(x: &Tensor, p: &SpectralFilterParams) -> Result<(Tensor, Spectrum)> {
    check_input(x, p)?;
    let x_fft = rfft2(&x.permute(&[0, 3, 1, 2])?)?;
    let y_fft = contract_channels(&x_fft, &p.filters()?)?;
    let mut y = irfft2(&y_fft, p.width)?.permute(&[0, 2, 3, 1])?;
    add_bias_nhwc(&mut y, &p.bias);
    Ok((y, x_fft))
}

pub fn spectral_filter_forward(x: &Tensor, p: &SpectralFilterParams) -> Result<Tensor> {
    Ok(forward_with_spectrum(x, p)?.0)
}

/// Gradients of a real scalar loss for one filter layer.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralGrads {
    pub input: Tensor,
    pub w_real: Tensor,
    pub w_imag: Tensor,
    pub bias: Tensor,
}

/// Backward pass given the cached input spectrum `x_fft` (`[B, Cin, H, Wh]`).
pub fn spectral_filter_backward(
    upstream: &Tensor,
    x_fft: &Spectrum,
    p: &SpectralFilterParams,
) -> Result<SpectralGrads> {
    let (h, w) = (p.height, p.width);
    let (cin, cout) = (p.in_channels(), p.out_channels());
    let batch = x_fft.shape()[0];
    if upstream.shape() != [batch, h, w, cout] {
        return shape_err(format!(
            "spectral filter upstream gradient must be {:?}, got {:?}",
            [batch, h, w, cout],
            upstream.shape()
        ));
    }
    let wh = half_width(w);
    let plane = h * wh;

    let mut dbias = vec![0.0; cout];
    for row in upstream.data().chunks(cout) {
        for (d, g) in dbias.iter_mut().zip(row) {
            *d += g;
        }
    }

    let g_fft = rfft2(&upstream.permute(&[0, 3, 1, 2])?)?;
    let gd = g_fft.data();
    let xd = x_fft.data();

    let multiplicity: Vec<f64> = (0..wh)
        .map(|v| if v == 0 || (w % 2 == 0 && v == w / 2) { 1.0 } else { 2.0 })
        .collect();
    let norm = 1.0 / (h * w) as f64;

    let mut dre = vec![0.0; cin * cout * plane];
    let mut dim = vec![0.0; cin * cout * plane];
    for c in 0..cin {
        for f in 0..cout {
            let mut acc = vec![Complex::new(0.0, 0.0); plane];
            for b in 0..batch {
                let gs = &gd[(b * cout + f) * plane..][..plane];
                let xs = &xd[(b * cin + c) * plane..][..plane];
                for ((a, g), x) in acc.iter_mut().zip(gs).zip(xs) {
                    *a += g * x.conj();
                }
            }
            let base = (c * cout + f) * plane;
            for (i, a) in acc.iter().enumerate() {
                let m = multiplicity[i % wh] * norm;
                dre[base + i] = a.re * m;
                dim[base + i] = a.im * m;
            }
        }
    }

    let filters = p.filters()?;
    let fd = filters.data();
    let mut dx_fft = vec![Complex::new(0.0, 0.0); batch * cin * plane];
    for b in 0..batch {
        for c in 0..cin {
            let out = &mut dx_fft[(b * cin + c) * plane..][..plane];
            for f in 0..cout {
                let gs = &gd[(b * cout + f) * plane..][..plane];
                let ws = &fd[(c * cout + f) * plane..][..plane];
                for ((o, g), wv) in out.iter_mut().zip(gs).zip(ws) {
                    *o += g * wv.conj();
                }
            }
        }
    }
    let dx_fft = Spectrum::new(vec![batch, cin, h, wh], w, dx_fft)?;
    let input = irfft2(&dx_fft, w)?.permute(&[0, 2, 3, 1])?;

    let wshape = vec![cin, cout, h, wh];
    Ok(SpectralGrads {
        input,
        w_real: Tensor::new(wshape.clone(), dre)?,
        w_imag: Tensor::new(wshape, dim)?,
        bias: Tensor::new(vec![cout], dbias)?,
    })
}

/// [`Layer`] wrapper storing its weights in a [`ParamStore`] as
/// `{name}.w_real`, `{name}.w_imag` and `{name}.bias`.
#[derive(Debug)]
pub struct SpectralFilter {
    name: String,
    in_channels: usize,
    out_channels: usize,
    height: usize,
    width: usize,
    cache: Option<Spectrum>,
}

impl SpectralFilter {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        in_channels: usize,
        out_channels: usize,
        height: usize,
        width: usize,
        init: SpectralInit,
        params: &mut ParamStore,
        seed: u64,
    ) -> Result<Self> {
        let name = name.into();
        let p = init_spectral_weights(
            in_channels,
            out_channels,
            height,
            width,
            rng::derive_seed(seed, &name),
            init,
        )?;
        params.insert(format!("{name}.w_real"), p.w_real, ParamKind::SpectralReal);
        params.insert(format!("{name}.w_imag"), p.w_imag, ParamKind::SpectralImag);
        params.insert(format!("{name}.bias"), p.bias, ParamKind::Bias);
        Ok(Self {
            name,
            in_channels,
            out_channels,
            height,
            width,
            cache: None,
        })
    }

    pub fn gather(&self, params: &ParamStore) -> Result<SpectralFilterParams> {
        Ok(SpectralFilterParams {
            w_real: params.get(&format!("{}.w_real", self.name))?.clone(),
            w_imag: params.get(&format!("{}.w_imag", self.name))?.clone(),
            bias: params.get(&format!("{}.bias", self.name))?.clone(),
            height: self.height,
            width: self.width,
        })
    }
}

impl Layer for SpectralFilter {
    fn name(&self) -> &str {
        &self.name
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        if input != [self.height, self.width, self.in_channels] {
            return shape_err(format!(
                "`{}` is bound to [{}, {}, {}] inputs, got {input:?}",
                self.name, self.height, self.width, self.in_channels
            ));
        }
        Ok(vec![self.height, self.width, self.out_channels])
    }

    fn forward(&mut self, params: &mut ParamStore, x: &Tensor, _mode: Mode) -> Result<Tensor> {
        let (y, x_fft) = forward_with_spectrum(x, &self.gather(params)?)?;
        self.cache = Some(x_fft);
        Ok(y)
    }

    fn infer(&self, params: &ParamStore, x: &Tensor) -> Result<Tensor> {
        spectral_filter_forward(x, &self.gather(params)?)
    }

    fn backward(
        &mut self,
        params: &ParamStore,
        upstream: &Tensor,
        grads: &mut GradStore,
    ) -> Result<Tensor> {
        let x_fft = self.cache.take().ok_or_else(|| missing_cache(&self.name))?;
        let g = spectral_filter_backward(upstream, &x_fft, &self.gather(params)?)?;
        grads.accumulate(&format!("{}.w_real", self.name), g.w_real)?;
        grads.accumulate(&format!("{}.w_imag", self.name), g.w_imag)?;
        grads.accumulate(&format!("{}.bias", self.name), g.bias)?;
        Ok(g.input)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
    }

    fn unit_filter(cin: usize, cout: usize, h: usize, w: usize) -> SpectralFilterParams {
        let mut delta = Tensor::zeros(&[h, w]);
        delta.set(&[0, 0], 1.0);
        SpectralFilterParams::from_spatial_kernel(&delta, cin, cout).unwrap()
    }

    #[test]
    fn unit_filter_is_identity() {
        let p = unit_filter(1, 1, 6, 7);
        assert!(p.w_real.data().iter().all(|&v| (v - 1.0).abs() < 1e-15));
        assert!(p.w_imag.data().iter().all(|&v| v.abs() < 1e-15));
        let x = random(&[2, 6, 7, 1], 1);
        let y = spectral_filter_forward(&x, &p).unwrap();
        assert!(y.max_abs_diff(&x).unwrap() < 1e-12);
    }

    #[test]
    fn zero_filter_outputs_bias() {
        let mut p = unit_filter(2, 3, 4, 4);
        p.w_real = Tensor::zeros(p.w_real.shape());
        p.w_imag = Tensor::zeros(p.w_imag.shape());
        p.bias = Tensor::new(vec![3], vec![0.5, -1.0, 2.0]).unwrap();
        let y = spectral_filter_forward(&random(&[2, 4, 4, 2], 2), &p).unwrap();
        for row in y.data().chunks(3) {
            assert_eq!(row, &[0.5, -1.0, 2.0]);
        }
    }

    #[test]
    fn resolution_mismatch_names_the_bound_size() {
        let p = unit_filter(1, 1, 8, 8);
        let err = spectral_filter_forward(&random(&[1, 4, 8, 1], 3), &p).unwrap_err();
        assert!(err.to_string().contains("8x8"), "{err}");
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let p = init_spectral_weights(2, 2, 4, 4, 1, SpectralInit::Direct).unwrap();
        let x = random(&[2, 4, 4, 2], 4);
        let (_, x_fft) = forward_with_spectrum(&x, &p).unwrap();
        let g = spectral_filter_backward(&Tensor::zeros(&[2, 4, 4, 2]), &x_fft, &p).unwrap();
        for t in [&g.input, &g.w_real, &g.w_imag, &g.bias] {
            assert!(t.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn bias_grad_sums_upstream() {
        let p = init_spectral_weights(1, 2, 4, 4, 1, SpectralInit::default()).unwrap();
        let x = random(&[3, 4, 4, 1], 5);
        let (_, x_fft) = forward_with_spectrum(&x, &p).unwrap();
        let up = random(&[3, 4, 4, 2], 6);
        let g = spectral_filter_backward(&up, &x_fft, &p).unwrap();
        for f in 0..2 {
            let s: f64 = up.data().iter().skip(f).step_by(2).sum();
            assert!((g.bias.data()[f] - s).abs() < 1e-12);
        }
    }

    #[test]
    fn init_is_reproducible_and_schemes_parse() {
        for scheme in [SpectralInit::Direct, SpectralInit::default()] {
            let a = init_spectral_weights(2, 3, 8, 8, 42, scheme).unwrap();
            let b = init_spectral_weights(2, 3, 8, 8, 42, scheme).unwrap();
            assert_eq!(a, b);
        }
        assert!("direct".parse::<SpectralInit>().is_ok());
        assert!(matches!("fancy".parse::<SpectralInit>(), Err(Error::Config(_))));
        assert!(init_spectral_weights(0, 1, 4, 4, 0, SpectralInit::Direct).is_err());
    }

    #[test]
    fn spatial_equivalent_init_with_delta_kernel_is_identity() {
        // a 1x1 kernel is a scaled delta at the origin
        let p = init_spectral_weights(1, 1, 8, 8, 9, SpectralInit::SpatialEquivalent { kernel: 1 })
            .unwrap();
        let scale = p.w_real.data()[0];
        let x = random(&[1, 8, 8, 1], 7);
        let y = spectral_filter_forward(&x, &p).unwrap();
        assert!(y.max_abs_diff(&x.scale(scale)).unwrap() < 1e-12);
    }

    #[test]
    fn layer_is_linear_without_bias() {
        let p = init_spectral_weights(2, 2, 6, 5, 3, SpectralInit::Direct).unwrap();
        let a = random(&[1, 6, 5, 2], 8);
        let b = random(&[1, 6, 5, 2], 9);
        let lhs = spectral_filter_forward(&a.scale(2.0).add(&b.scale(-3.0)).unwrap(), &p).unwrap();
        let rhs = spectral_filter_forward(&a, &p)
            .unwrap()
            .scale(2.0)
            .add(&spectral_filter_forward(&b, &p).unwrap().scale(-3.0))
            .unwrap();
        assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-12);
    }
}
