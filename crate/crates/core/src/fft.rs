//! Two-dimensional real-input Fourier transforms over the last two axes.
//!
//! Conventions:
//!
//! * the forward transform is unnormalized,
//!   `F(u, v) = sum_x sum_y f(x, y) exp(-2 pi j (u x / H + v y / W))`;
//! * only the non-negative frequencies of the last axis are stored, so a
//!   plane of width `W` has `W / 2 + 1` spectral columns;
//! * the inverse carries the `1 / (H W)` factor and returns the real part of
//!   the inverse of the Hermitian extension of the stored half plane. When the
//!   half plane is not itself the transform of a real signal (for example the
//!   product of an input spectrum with unconstrained complex weights), the
//!   imaginary residue of the inverse is discarded.
//!
//! One-dimensional transforms come from `rustfft`, which covers every length
//! (mixed radix with Bluestein/Rader fallbacks), so odd and prime sizes are
//! exact, not padded.

use std::cell::RefCell;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

pub use rustfft::num_complex::Complex64 as Complex;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(len)
        } else {
            p.plan_fft_forward(len)
        }
    })
}

pub fn half_width(width: usize) -> usize {
    width / 2 + 1
}

/// Complex half-plane spectrum; the last two axes are `[H, W / 2 + 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    shape: Vec<usize>,
    width: usize,
    data: Vec<Complex64>,
}

impl Spectrum {
    pub fn new(shape: Vec<usize>, width: usize, data: Vec<Complex64>) -> Result<Self> {
        if shape.len() < 2 || shape.contains(&0) || width == 0 {
            return shape_err(format!(
                "spectrum shape {shape:?} (width {width}) must have rank >= 2 and positive extents"
            ));
        }
        if shape[shape.len() - 1] != half_width(width) {
            return shape_err(format!(
                "spectrum last extent {} does not match width {width} (expected {})",
                shape[shape.len() - 1],
                half_width(width)
            ));
        }
        if shape.iter().product::<usize>() != data.len() {
            return shape_err(format!(
                "spectrum shape {shape:?} does not hold {} values",
                data.len()
            ));
        }
        Ok(Self { shape, width, data })
    }

    pub fn zeros(shape: &[usize], width: usize) -> Result<Self> {
        let n = shape.iter().product();
        Self::new(shape.to_vec(), width, vec![Complex64::new(0.0, 0.0); n])
    }

    /// Builds a spectrum from separate real and imaginary tensors of equal shape.
    pub fn from_parts(re: &Tensor, im: &Tensor, width: usize) -> Result<Self> {
        re.expect_same_shape(im)?;
        let data = re
            .data()
            .iter()
            .zip(im.data())
            .map(|(&a, &b)| Complex64::new(a, b))
            .collect();
        Self::new(re.shape().to_vec(), width, data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// Width of the real signal this spectrum describes.
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.shape[self.shape.len() - 2]
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn get(&self, index: &[usize]) -> Complex64 {
        let o = index
            .iter()
            .zip(&self.shape)
            .fold(0, |acc, (&i, &n)| acc * n + i);
        self.data[o]
    }

    pub fn real(&self) -> Tensor {
        Tensor::new(self.shape.clone(), self.data.iter().map(|c| c.re).collect())
            .expect("shape already validated")
    }

    pub fn imag(&self) -> Tensor {
        Tensor::new(self.shape.clone(), self.data.iter().map(|c| c.im).collect())
            .expect("shape already validated")
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            shape: self.shape.clone(),
            width: self.width,
            data: self.data.iter().map(|c| c * factor).collect(),
        }
    }

    pub fn add(&self, other: &Spectrum) -> Result<Self> {
        if self.shape != other.shape || self.width != other.width {
            return shape_err(format!(
                "spectrum shapes differ: {:?} vs {:?}",
                self.shape, other.shape
            ));
        }
        Ok(Self {
            shape: self.shape.clone(),
            width: self.width,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn max_abs_diff(&self, other: &Spectrum) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// Forward transform of one `h x w` plane into `h x (w / 2 + 1)` bins.
pub(crate) fn rfft2_plane(input: &[f64], h: usize, w: usize, out: &mut [Complex64]) {
    let wh = half_width(w);
    debug_assert_eq!(input.len(), h * w);
    debug_assert_eq!(out.len(), h * wh);

    let mut rows: Vec<Complex64> = input.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    plan(w, false).process(&mut rows);

    let mut cols = vec![Complex64::new(0.0, 0.0); h * wh];
    for r in 0..h {
        for k in 0..wh {
            cols[k * h + r] = rows[r * w + k];
        }
    }
    plan(h, false).process(&mut cols);
    for k in 0..wh {
        for r in 0..h {
            out[r * wh + k] = cols[k * h + r];
        }
    }
}

/// Inverse of [`rfft2_plane`] with `1 / (h w)` normalization; real part only.
pub(crate) fn irfft2_plane(input: &[Complex64], h: usize, w: usize, out: &mut [f64]) {
    let wh = half_width(w);
    debug_assert_eq!(input.len(), h * wh);
    debug_assert_eq!(out.len(), h * w);

    let mut cols = vec![Complex64::new(0.0, 0.0); h * wh];
    for r in 0..h {
        for k in 0..wh {
            cols[k * h + r] = input[r * wh + k];
        }
    }
    plan(h, true).process(&mut cols);

    let mut rows = vec![Complex64::new(0.0, 0.0); h * w];
    for r in 0..h {
        let row = &mut rows[r * w..(r + 1) * w];
        for k in 0..wh {
            row[k] = cols[k * h + r];
        }
        for k in 1..wh {
            let j = w - k;
            if j >= wh {
                row[j] = cols[k * h + r].conj();
            }
        }
    }
    plan(w, true).process(&mut rows);

    let norm = 1.0 / (h * w) as f64;
    for (o, c) in out.iter_mut().zip(&rows) {
        *o = c.re * norm;
    }
}

/// Real-input 2-D DFT over the last two axes of `x`.
pub fn rfft2(x: &Tensor) -> Result<Spectrum> {
    if x.rank() < 2 {
        return shape_err(format!(
            "rfft2 needs at least two axes, got shape {:?}",
            x.shape()
        ));
    }
    let r = x.rank();
    let (h, w) = (x.shape()[r - 2], x.shape()[r - 1]);
    let wh = half_width(w);
    let planes = x.len() / (h * w);
    let mut data = vec![Complex64::new(0.0, 0.0); planes * h * wh];
    for (src, dst) in x.data().chunks(h * w).zip(data.chunks_mut(h * wh)) {
        rfft2_plane(src, h, w, dst);
    }
    let mut shape = x.shape().to_vec();
    shape[r - 1] = wh;
    Spectrum::new(shape, w, data)
}

/// Inverse of [`rfft2`] producing planes of width `out_width`.
pub fn irfft2(spec: &Spectrum, out_width: usize) -> Result<Tensor> {
    let r = spec.shape.len();
    let (h, wh) = (spec.shape[r - 2], spec.shape[r - 1]);
    if out_width == 0 || half_width(out_width) != wh {
        return shape_err(format!(
            "spectrum has {wh} columns, which cannot produce width {out_width} (needs {})",
            half_width(out_width)
        ));
    }
    let planes = spec.data.len() / (h * wh);
    let mut data = vec![0.0; planes * h * out_width];
    for (src, dst) in spec.data.chunks(h * wh).zip(data.chunks_mut(h * out_width)) {
        irfft2_plane(src, h, out_width, dst);
    }
    let mut shape = spec.shape.clone();
    shape[r - 1] = out_width;
    Tensor::new(shape, data)
}

/// `out[b, f, h, w] = sum_c x[b, c, h, w] * weights[c, f, h, w]`.
pub fn contract_channels(x: &Spectrum, weights: &Spectrum) -> Result<Spectrum> {
    if x.shape.len() != 4 || weights.shape.len() != 4 {
        return shape_err(format!(
            "contract_channels expects rank-4 operands, got {:?} and {:?}",
            x.shape, weights.shape
        ));
    }
    let [b, cin, h, wh] = [x.shape[0], x.shape[1], x.shape[2], x.shape[3]];
    let [wc, cout, wh_h, wh_w] = [
        weights.shape[0],
        weights.shape[1],
        weights.shape[2],
        weights.shape[3],
    ];
    if wc != cin || wh_h != h || wh_w != wh || x.width != weights.width {
        return shape_err(format!(
            "contract_channels: input {:?} (width {}) is incompatible with weights {:?} (width {})",
            x.shape, x.width, weights.shape, weights.width
        ));
    }
    let plane = h * wh;
    let mut out = vec![Complex64::new(0.0, 0.0); b * cout * plane];
    for bi in 0..b {
        for c in 0..cin {
            let xs = &x.data[(bi * cin + c) * plane..][..plane];
            for f in 0..cout {
                let ws = &weights.data[(c * cout + f) * plane..][..plane];
                let os = &mut out[(bi * cout + f) * plane..][..plane];
                for ((o, xv), wv) in os.iter_mut().zip(xs).zip(ws) {
                    *o += xv * wv;
                }
            }
        }
    }
    Spectrum::new(vec![b, cout, h, wh], x.width, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
    }

    /// The defining double sum, evaluated literally.
    fn naive_dft(x: &Tensor) -> Vec<Complex64> {
        let (h, w) = (x.shape()[0], x.shape()[1]);
        let mut out = Vec::with_capacity(h * w);
        for u in 0..h {
            for v in 0..w {
                let mut acc = Complex64::new(0.0, 0.0);
                for i in 0..h {
                    for j in 0..w {
                        let theta =
                            -2.0 * PI * ((u * i) as f64 / h as f64 + (v * j) as f64 / w as f64);
                        acc += Complex64::from_polar(x.get(&[i, j]), theta);
                    }
                }
                out.push(acc);
            }
        }
        out
    }

    /// Real part of the literal inverse over a full spectrum.
    fn naive_idft_real(full: &[Complex64], h: usize, w: usize) -> Tensor {
        Tensor::from_fn(&[h, w], |idx| {
            let (i, j) = (idx / w, idx % w);
            let mut acc = Complex64::new(0.0, 0.0);
            for u in 0..h {
                for v in 0..w {
                    let theta = 2.0 * PI * ((u * i) as f64 / h as f64 + (v * j) as f64 / w as f64);
                    acc += full[u * w + v] * Complex64::from_polar(1.0, theta);
                }
            }
            acc.re / (h * w) as f64
        })
    }

    #[test]
    fn constant_plane_is_dc_only() {
        let c = 0.75;
        let s = rfft2(&Tensor::full(&[4, 4], c)).unwrap();
        assert_eq!(s.shape(), &[4, 3]);
        for (i, v) in s.data().iter().enumerate() {
            let expected = if i == 0 { 16.0 * c } else { 0.0 };
            assert!((v - Complex64::new(expected, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn impulse_has_flat_spectrum() {
        let mut x = Tensor::zeros(&[4, 4]);
        x.set(&[0, 0], 1.0);
        let s = rfft2(&x).unwrap();
        assert!(s.data().iter().all(|v| (v - Complex64::new(1.0, 0.0)).norm() < 1e-12));
    }

    #[test]
    fn random_6x6_matches_literal_dft() {
        let x = random(&[6, 6], 11);
        let full = naive_dft(&x);
        let s = rfft2(&x).unwrap();
        for u in 0..6 {
            for v in 0..4 {
                assert!((s.get(&[u, v]) - full[u * 6 + v]).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn roundtrip_8x8() {
        let x = random(&[8, 8], 12);
        let back = irfft2(&rfft2(&x).unwrap(), 8).unwrap();
        assert!(back.max_abs_diff(&x).unwrap() < 1e-10);
    }

    #[test]
    fn zero_spectrum_inverts_to_zero() {
        let s = Spectrum::zeros(&[5, 4], 7).unwrap();
        let x = irfft2(&s, 7).unwrap();
        assert!(x.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shifted_impulse_inverts_to_shifted_impulse() {
        let (h, w) = (6, 5);
        let (si, sj) = (2, 3);
        let full: Vec<Complex64> = (0..h * w)
            .map(|k| {
                let (u, v) = (k / w, k % w);
                let theta = -2.0 * PI * ((u * si) as f64 / h as f64 + (v * sj) as f64 / w as f64);
                Complex64::from_polar(1.0, theta)
            })
            .collect();
        let half: Vec<Complex64> = (0..h)
            .flat_map(|u| (0..half_width(w)).map(move |v| (u, v)))
            .map(|(u, v)| full[u * w + v])
            .collect();
        let spec = Spectrum::new(vec![h, half_width(w)], w, half).unwrap();
        let x = irfft2(&spec, w).unwrap();
        let oracle = naive_idft_real(&full, h, w);
        assert!(x.max_abs_diff(&oracle).unwrap() < 1e-10);
        assert!((x.get(&[si, sj]) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn width_mismatch_is_rejected() {
        let s = rfft2(&random(&[4, 6], 13)).unwrap();
        assert!(irfft2(&s, 8).is_err());
        assert!(irfft2(&s, 7).is_ok());
    }

    #[test]
    fn contraction_identity_and_projection() {
        let x = rfft2(&random(&[1, 1, 4, 4], 14)).unwrap();
        let ones = Spectrum::new(
            vec![1, 3, 4, 3],
            4,
            vec![Complex64::new(1.0, 0.0); 36],
        )
        .unwrap();
        let y = contract_channels(&x, &ones).unwrap();
        for f in 0..3 {
            for h in 0..4 {
                for w in 0..3 {
                    assert_eq!(y.get(&[0, f, h, w]), x.get(&[0, 0, h, w]));
                }
            }
        }

        let x2 = rfft2(&random(&[1, 2, 4, 4], 15)).unwrap();
        let mut sel = Spectrum::zeros(&[2, 1, 4, 3], 4).unwrap();
        for v in &mut sel.data_mut()[..12] {
            *v = Complex64::new(1.0, 0.0);
        }
        let y2 = contract_channels(&x2, &sel).unwrap();
        assert_eq!(y2.data(), &x2.data()[..12]);
    }

    #[test]
    fn contraction_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let mut rc = |n: usize| -> Vec<Complex64> {
            (0..n)
                .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect()
        };
        let x = Spectrum::new(vec![2, 3, 4, 3], 4, rc(72)).unwrap();
        let w = Spectrum::new(vec![3, 2, 4, 3], 4, rc(72)).unwrap();
        let y = contract_channels(&x, &w).unwrap();
        for b in 0..2 {
            for f in 0..2 {
                for h in 0..4 {
                    for v in 0..3 {
                        let mut acc = Complex64::new(0.0, 0.0);
                        for c in 0..3 {
                            acc += x.get(&[b, c, h, v]) * w.get(&[c, f, h, v]);
                        }
                        assert!((y.get(&[b, f, h, v]) - acc).norm() < 1e-12);
                    }
                }
            }
        }
        let bad = Spectrum::zeros(&[2, 2, 4, 3], 4).unwrap();
        assert!(contract_channels(&x, &bad).is_err());
    }
}
