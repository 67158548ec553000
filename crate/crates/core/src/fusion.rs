//! Vector-level fusion of the spatial (`v_s`, `[B, d_s]`) and spectral
//! (`v_f`, `[B, d_f]`) tower outputs.

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::tensor::Tensor;

/// Denominator guard of the L2 step.
pub const L2_EPSILON: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FusionKind {
    /// `[v_s ; v_f]`, fed to the head unnormalized.
    Concat,
    /// Flattened outer product `v_s v_f^T`, optionally followed by signed
    /// square root and L2 normalization.
    Bilinear {
        #[serde(default = "default_true")]
        normalize: bool,
    },
}

fn default_true() -> bool {
    true
}

impl FusionKind {
    pub fn bilinear() -> Self {
        FusionKind::Bilinear { normalize: true }
    }

    pub fn output_dim(self, d_s: usize, d_f: usize) -> usize {
        match self {
            FusionKind::Concat => d_s + d_f,
            FusionKind::Bilinear { .. } => d_s * d_f,
        }
    }
}

fn batch_dims(v_s: &Tensor, v_f: &Tensor) -> Result<(usize, usize, usize)> {
    v_s.expect_rank(2, "fusion (spatial vector)")?;
    v_f.expect_rank(2, "fusion (spectral vector)")?;
    if v_s.shape()[0] != v_f.shape()[0] {
        return shape_err(format!(
            "fusion batch mismatch: spatial {:?} vs spectral {:?}",
            v_s.shape(),
            v_f.shape()
        ));
    }
    Ok((v_s.shape()[0], v_s.shape()[1], v_f.shape()[1]))
}

/// Row-wise concatenation, spatial features first.
pub fn concat_fuse(v_s: &Tensor, v_f: &Tensor) -> Result<Tensor> {
    let (b, ds, df) = batch_dims(v_s, v_f)?;
    let mut out = Vec::with_capacity(b * (ds + df));
    for (a, c) in v_s.data().chunks(ds).zip(v_f.data().chunks(df)) {
        out.extend_from_slice(a);
        out.extend_from_slice(c);
    }
    Tensor::new(vec![b, ds + df], out)
}

/// Concatenation from a raw spectral segment; `d_f = 0` returns `v_s`.
pub fn concat_fuse_slices(v_s: &Tensor, v_f: &[f64], d_f: usize) -> Result<Tensor> {
    v_s.expect_rank(2, "fusion (spatial vector)")?;
    let b = v_s.shape()[0];
    if v_f.len() != b * d_f {
        return shape_err(format!(
            "spectral segment has {} values, expected {b} x {d_f}",
            v_f.len()
        ));
    }
    if d_f == 0 {
        return Ok(v_s.clone());
    }
    concat_fuse(v_s, &Tensor::new(vec![b, d_f], v_f.to_vec())?)
}

/// Splits a concatenated gradient back into its two segments.
pub fn concat_split(z: &Tensor, d_s: usize) -> Result<(Tensor, Tensor)> {
    z.expect_rank(2, "concat split")?;
    let (b, n) = (z.shape()[0], z.shape()[1]);
    if d_s == 0 || d_s >= n {
        return Err(Error::InvalidArgument(format!(
            "cannot split {n} columns at {d_s}"
        )));
    }
    Ok((
        z.slice(&[0..b, 0..d_s])?,
        z.slice(&[0..b, d_s..n])?,
    ))
}

/// `P[b] = v_s[b] v_f[b]^T` flattened row-major (`k = i d_f + j`).
pub fn outer_product(v_s: &Tensor, v_f: &Tensor) -> Result<Tensor> {
    let (b, ds, df) = batch_dims(v_s, v_f)?;
    let mut out = Vec::with_capacity(b * ds * df);
    for (x, y) in v_s.data().chunks(ds).zip(v_f.data().chunks(df)) {
        for &xi in x {
            out.extend(y.iter().map(|&yj| xi * yj));
        }
    }
    Tensor::new(vec![b, ds * df], out)
}

pub fn bilinear_fuse(v_s: &Tensor, v_f: &Tensor, normalize: bool) -> Result<Tensor> {
    let p = outer_product(v_s, v_f)?;
    if normalize {
        signed_sqrt_l2(&p)
    } else {
        Ok(p)
    }
}

fn signed_sqrt(v: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        v.signum() * v.abs().sqrt()
    }
}

/// Row-wise `sign(z) sqrt|z|` followed by division by its L2 norm (plus
/// [`L2_EPSILON`]). A zero row stays zero.
pub fn signed_sqrt_l2(z: &Tensor) -> Result<Tensor> {
    z.expect_rank(2, "signed_sqrt_l2")?;
    let n = z.shape()[1];
    let mut out = z.map(signed_sqrt);
    for row in out.data_mut().chunks_mut(n) {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        let d = norm + L2_EPSILON;
        row.iter_mut().for_each(|v| *v /= d);
    }
    Ok(out)
}

/// Gradient of [`signed_sqrt_l2`] w.r.t. its input. The derivative of the
/// signed square root at exactly zero is taken as 0.
pub fn signed_sqrt_l2_backward(z: &Tensor, upstream: &Tensor) -> Result<Tensor> {
    z.expect_same_shape(upstream)?;
    let n = z.shape()[1];
    let mut dz = Tensor::zeros(z.shape());
    for ((zr, gr), dr) in z
        .data()
        .chunks(n)
        .zip(upstream.data().chunks(n))
        .zip(dz.data_mut().chunks_mut(n))
    {
        let s: Vec<f64> = zr.iter().map(|&v| signed_sqrt(v)).collect();
        let norm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
        let d = norm + L2_EPSILON;
        let gs: f64 = gr.iter().zip(&s).map(|(g, v)| g * v).sum();
        for i in 0..n {
            let ds = if norm > 0.0 {
                gr[i] / d - s[i] * gs / (norm * d * d)
            } else {
                gr[i] / d
            };
            dr[i] = if zr[i] == 0.0 {
                0.0
            } else {
                ds * 0.5 / zr[i].abs().sqrt()
            };
        }
    }
    Ok(dz)
}

/// Fusion step with its cached inputs, used by the fused model.
#[derive(Debug)]
pub struct FusionHead {
    kind: FusionKind,
    cache: Option<(Tensor, Tensor)>,
}

impl FusionHead {
    pub fn new(kind: FusionKind) -> Self {
        Self { kind, cache: None }
    }

    pub fn kind(&self) -> FusionKind {
        self.kind
    }

    pub fn apply(&self, v_s: &Tensor, v_f: &Tensor) -> Result<Tensor> {
        match self.kind {
            FusionKind::Concat => concat_fuse(v_s, v_f),
            FusionKind::Bilinear { normalize } => bilinear_fuse(v_s, v_f, normalize),
        }
    }

    pub fn forward(&mut self, v_s: &Tensor, v_f: &Tensor) -> Result<Tensor> {
        let z = self.apply(v_s, v_f)?;
        self.cache = Some((v_s.clone(), v_f.clone()));
        Ok(z)
    }

    /// Returns `(d v_s, d v_f)`.
    pub fn backward(&mut self, upstream: &Tensor) -> Result<(Tensor, Tensor)> {
        let (v_s, v_f) = self
            .cache
            .take()
            .ok_or_else(|| Error::State("fusion backward without forward".into()))?;
        let (b, ds, df) = batch_dims(&v_s, &v_f)?;
        match self.kind {
            FusionKind::Concat => concat_split(upstream, ds),
            FusionKind::Bilinear { normalize } => {
                let dp = if normalize {
                    signed_sqrt_l2_backward(&outer_product(&v_s, &v_f)?, upstream)?
                } else {
                    upstream.clone()
                };
                if dp.shape() != [b, ds * df] {
                    return shape_err(format!(
                        "bilinear upstream gradient must be [{b}, {}], got {:?}",
                        ds * df,
                        dp.shape()
                    ));
                }
                let mut dvs = vec![0.0; b * ds];
                let mut dvf = vec![0.0; b * df];
                for bi in 0..b {
                    let x = &v_s.data()[bi * ds..][..ds];
                    let y = &v_f.data()[bi * df..][..df];
                    let g = &dp.data()[bi * ds * df..][..ds * df];
                    for i in 0..ds {
                        for j in 0..df {
                            let gij = g[i * df + j];
                            dvs[bi * ds + i] += gij * y[j];
                            dvf[bi * df + j] += gij * x[i];
                        }
                    }
                }
                Ok((Tensor::new(vec![b, ds], dvs)?, Tensor::new(vec![b, df], dvf)?))
            }
        }
    }
}
