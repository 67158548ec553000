//! Standard and depthwise 2-D convolution (cross-correlation orientation,
//! no kernel flip), NHWC activations, `[K, K, Cin, Cout]` kernels.

use serde::{Deserialize, Serialize};

use super::{expect_channels, expect_nhwc, he_normal, missing_cache, register, Layer, Mode};
use crate::error::{shape_err, Error, Result};
use crate::params::{GradStore, ParamKind, ParamStore};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    #[default]
    Same,
    Valid,
}

/// Output extent and leading padding for one spatial axis pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub out_h: usize,
    pub out_w: usize,
    pub pad_top: usize,
    pub pad_left: usize,
}

impl ConvGeometry {
    pub fn new(h: usize, w: usize, kernel: usize, stride: usize, padding: Padding) -> Result<Self> {
        if kernel == 0 || stride == 0 {
            return Err(Error::Config(format!(
                "kernel ({kernel}) and stride ({stride}) must be positive"
            )));
        }
        let axis = |n: usize| -> Result<(usize, usize)> {
            match padding {
                Padding::Valid => {
                    if n < kernel {
                        return shape_err(format!(
                            "valid convolution with kernel {kernel} needs extent >= {kernel}, got {n}"
                        ));
                    }
                    Ok(((n - kernel) / stride + 1, 0))
                }
                Padding::Same => {
                    let out = n.div_ceil(stride);
                    let total = ((out - 1) * stride + kernel).saturating_sub(n);
                    // odd overhang goes to the bottom/right
                    Ok((out, total / 2))
                }
            }
        };
        let (out_h, pad_top) = axis(h)?;
        let (out_w, pad_left) = axis(w)?;
        Ok(Self {
            out_h,
            out_w,
            pad_top,
            pad_left,
        })
    }

    #[inline]
    fn input_row(&self, o: usize, k: usize, stride: usize, pad: usize, n: usize) -> Option<usize> {
        let i = (o * stride + k).checked_sub(pad)?;
        (i < n).then_some(i)
    }
}

fn kernel_dims(w: &Tensor) -> Result<(usize, usize, usize)> {
    w.expect_rank(4, "convolution kernel")?;
    let s = w.shape();
    if s[0] != s[1] {
        return shape_err(format!("convolution kernel must be square, got {s:?}"));
    }
    Ok((s[0], s[2], s[3]))
}

/// `y = conv(x, w) + b` for `x: [B, H, W, Cin]`, `w: [K, K, Cin, Cout]`.
pub fn conv2d_forward(
    x: &Tensor,
    w: &Tensor,
    b: Option<&Tensor>,
    stride: usize,
    padding: Padding,
) -> Result<Tensor> {
    let [batch, h, wd, cin] = expect_nhwc(x, "conv2d")?;
    let (k, wcin, cout) = kernel_dims(w)?;
    if wcin != cin {
        return shape_err(format!(
            "conv2d kernel expects {wcin} input channels, input has {cin}"
        ));
    }
    if let Some(b) = b {
        if b.shape() != [cout] {
            return shape_err(format!("conv2d bias must be [{cout}], got {:?}", b.shape()));
        }
    }
    let g = ConvGeometry::new(h, wd, k, stride, padding)?;
    let mut out = vec![0.0; batch * g.out_h * g.out_w * cout];
    let xd = x.data();
    let wdat = w.data();
    for bi in 0..batch {
        for oh in 0..g.out_h {
            for ow in 0..g.out_w {
                let o = &mut out[((bi * g.out_h + oh) * g.out_w + ow) * cout..][..cout];
                if let Some(b) = b {
                    o.copy_from_slice(b.data());
                }
                for kh in 0..k {
                    let Some(ih) = g.input_row(oh, kh, stride, g.pad_top, h) else {
                        continue;
                    };
                    for kw in 0..k {
                        let Some(iw) = g.input_row(ow, kw, stride, g.pad_left, wd) else {
                            continue;
                        };
                        let xs = &xd[((bi * h + ih) * wd + iw) * cin..][..cin];
                        let wbase = (kh * k + kw) * cin * cout;
                        for (ci, &xv) in xs.iter().enumerate() {
                            let wr = &wdat[wbase + ci * cout..][..cout];
                            for (ov, &wv) in o.iter_mut().zip(wr) {
                                *ov += xv * wv;
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![batch, g.out_h, g.out_w, cout], out)
}

/// Returns `(dx, dw, db)` for [`conv2d_forward`].
pub fn conv2d_backward(
    x: &Tensor,
    w: &Tensor,
    upstream: &Tensor,
    stride: usize,
    padding: Padding,
) -> Result<(Tensor, Tensor, Tensor)> {
    let [batch, h, wd, cin] = expect_nhwc(x, "conv2d backward")?;
    let (k, _, cout) = kernel_dims(w)?;
    let g = ConvGeometry::new(h, wd, k, stride, padding)?;
    if upstream.shape() != [batch, g.out_h, g.out_w, cout] {
        return shape_err(format!(
            "conv2d upstream gradient has shape {:?}, expected {:?}",
            upstream.shape(),
            [batch, g.out_h, g.out_w, cout]
        ));
    }
    let mut dx = vec![0.0; x.len()];
    let mut dw = vec![0.0; w.len()];
    let mut db = vec![0.0; cout];
    let xd = x.data();
    let wdat = w.data();
    let ud = upstream.data();
    for bi in 0..batch {
        for oh in 0..g.out_h {
            for ow in 0..g.out_w {
                let u = &ud[((bi * g.out_h + oh) * g.out_w + ow) * cout..][..cout];
                for (d, &uv) in db.iter_mut().zip(u) {
                    *d += uv;
                }
                for kh in 0..k {
                    let Some(ih) = g.input_row(oh, kh, stride, g.pad_top, h) else {
                        continue;
                    };
                    for kw in 0..k {
                        let Some(iw) = g.input_row(ow, kw, stride, g.pad_left, wd) else {
                            continue;
                        };
                        let xoff = ((bi * h + ih) * wd + iw) * cin;
                        let wbase = (kh * k + kw) * cin * cout;
                        for ci in 0..cin {
                            let xv = xd[xoff + ci];
                            let wr = &wdat[wbase + ci * cout..][..cout];
                            let dwr = &mut dw[wbase + ci * cout..][..cout];
                            let mut acc = 0.0;
                            for ((dwv, &wv), &uv) in dwr.iter_mut().zip(wr).zip(u) {
                                acc += wv * uv;
                                *dwv += xv * uv;
                            }
                            dx[xoff + ci] += acc;
                        }
                    }
                }
            }
        }
    }
    Ok((
        Tensor::new(x.shape().to_vec(), dx)?,
        Tensor::new(w.shape().to_vec(), dw)?,
        Tensor::new(vec![cout], db)?,
    ))
}

/// Per-channel spatial filtering, `w: [K, K, C]`.
pub fn depthwise_forward(x: &Tensor, w: &Tensor, stride: usize, padding: Padding) -> Result<Tensor> {
    let [batch, h, wd, c] = expect_nhwc(x, "depthwise conv")?;
    w.expect_rank(3, "depthwise kernel")?;
    let k = w.shape()[0];
    if w.shape() != [k, k, c] {
        return shape_err(format!(
            "depthwise kernel must be [{k}, {k}, {c}], got {:?}",
            w.shape()
        ));
    }
    let g = ConvGeometry::new(h, wd, k, stride, padding)?;
    let mut out = vec![0.0; batch * g.out_h * g.out_w * c];
    let xd = x.data();
    let wdat = w.data();
    for bi in 0..batch {
        for oh in 0..g.out_h {
            for ow in 0..g.out_w {
                let o = &mut out[((bi * g.out_h + oh) * g.out_w + ow) * c..][..c];
                for kh in 0..k {
                    let Some(ih) = g.input_row(oh, kh, stride, g.pad_top, h) else {
                        continue;
                    };
                    for kw in 0..k {
                        let Some(iw) = g.input_row(ow, kw, stride, g.pad_left, wd) else {
                            continue;
                        };
                        let xs = &xd[((bi * h + ih) * wd + iw) * c..][..c];
                        let wr = &wdat[(kh * k + kw) * c..][..c];
                        for ((ov, &xv), &wv) in o.iter_mut().zip(xs).zip(wr) {
                            *ov += xv * wv;
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![batch, g.out_h, g.out_w, c], out)
}

/// Returns `(dx, dw)` for [`depthwise_forward`].
pub fn depthwise_backward(
    x: &Tensor,
    w: &Tensor,
    upstream: &Tensor,
    stride: usize,
    padding: Padding,
) -> Result<(Tensor, Tensor)> {
    let [batch, h, wd, c] = expect_nhwc(x, "depthwise backward")?;
    let k = w.shape()[0];
    let g = ConvGeometry::new(h, wd, k, stride, padding)?;
    if upstream.shape() != [batch, g.out_h, g.out_w, c] {
        return shape_err(format!(
            "depthwise upstream gradient has shape {:?}",
            upstream.shape()
        ));
    }
    let mut dx = vec![0.0; x.len()];
    let mut dw = vec![0.0; w.len()];
    let xd = x.data();
    let wdat = w.data();
    let ud = upstream.data();
    for bi in 0..batch {
        for oh in 0..g.out_h {
            for ow in 0..g.out_w {
                let u = &ud[((bi * g.out_h + oh) * g.out_w + ow) * c..][..c];
                for kh in 0..k {
                    let Some(ih) = g.input_row(oh, kh, stride, g.pad_top, h) else {
                        continue;
                    };
                    for kw in 0..k {
                        let Some(iw) = g.input_row(ow, kw, stride, g.pad_left, wd) else {
                            continue;
                        };
                        let xoff = ((bi * h + ih) * wd + iw) * c;
                        let woff = (kh * k + kw) * c;
                        for ch in 0..c {
                            dx[xoff + ch] += wdat[woff + ch] * u[ch];
                            dw[woff + ch] += xd[xoff + ch] * u[ch];
                        }
                    }
                }
            }
        }
    }
    Ok((
        Tensor::new(x.shape().to_vec(), dx)?,
        Tensor::new(w.shape().to_vec(), dw)?,
    ))
}

#[derive(Debug)]
pub struct Conv2d {
    name: String,
    kernel: usize,
    stride: usize,
    padding: Padding,
    in_channels: usize,
    out_channels: usize,
    weight: String,
    bias: Option<String>,
    cache: Option<Tensor>,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        kernel: usize,
        stride: usize,
        padding: Padding,
        in_channels: usize,
        out_channels: usize,
        use_bias: bool,
        params: &mut ParamStore,
        seed: u64,
    ) -> Self {
        let name = name.into();
        let wname = format!("{name}.weight");
        let w = he_normal(
            &[kernel, kernel, in_channels, out_channels],
            kernel * kernel * in_channels,
            seed,
            &wname,
        );
        let weight = register(params, &wname, w, ParamKind::Weight);
        let bias = use_bias.then(|| {
            register(
                params,
                &format!("{name}.bias"),
                Tensor::zeros(&[out_channels]),
                ParamKind::Bias,
            )
        });
        Self {
            name,
            kernel,
            stride,
            padding,
            in_channels,
            out_channels,
            weight,
            bias,
            cache: None,
        }
    }

    fn run(&self, params: &ParamStore, x: &Tensor) -> Result<Tensor> {
        expect_channels(x, self.in_channels, &self.name)?;
        let b = match &self.bias {
            Some(n) => Some(params.get(n)?),
            None => None,
        };
        conv2d_forward(x, params.get(&self.weight)?, b, self.stride, self.padding)
    }
}

impl Layer for Conv2d {
    fn name(&self) -> &str {
        &self.name
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        if input.len() != 3 || input[2] != self.in_channels {
            return shape_err(format!(
                "`{}` expects [H, W, {}], got {input:?}",
                self.name, self.in_channels
            ));
        }
        let g = ConvGeometry::new(input[0], input[1], self.kernel, self.stride, self.padding)?;
        Ok(vec![g.out_h, g.out_w, self.out_channels])
    }

    fn forward(&mut self, params: &mut ParamStore, x: &Tensor, _mode: Mode) -> Result<Tensor> {
        let y = self.run(params, x)?;
        self.cache = Some(x.clone());
        Ok(y)
    }

    fn infer(&self, params: &ParamStore, x: &Tensor) -> Result<Tensor> {
        self.run(params, x)
    }

    fn backward(
        &mut self,
        params: &ParamStore,
        upstream: &Tensor,
        grads: &mut GradStore,
    ) -> Result<Tensor> {
        let x = self.cache.take().ok_or_else(|| missing_cache(&self.name))?;
        let (dx, dw, db) =
            conv2d_backward(&x, params.get(&self.weight)?, upstream, self.stride, self.padding)?;
        grads.accumulate(&self.weight, dw)?;
        if let Some(b) = &self.bias {
            grads.accumulate(b, db)?;
        }
        Ok(dx)
    }
}

#[derive(Debug)]
pub struct DepthwiseConv2d {
    name: String,
    kernel: usize,
    channels: usize,
    weight: String,
    cache: Option<Tensor>,
}

impl DepthwiseConv2d {
    pub fn new(
        name: impl Into<String>,
        kernel: usize,
        channels: usize,
        params: &mut ParamStore,
        seed: u64,
    ) -> Self {
        let name = name.into();
        let wname = format!("{name}.weight");
        let w = he_normal(&[kernel, kernel, channels], kernel * kernel, seed, &wname);
        let weight = register(params, &wname, w, ParamKind::Weight);
        Self {
            name,
            kernel,
            channels,
            weight,
            cache: None,
        }
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }
}

impl Layer for DepthwiseConv2d {
    fn name(&self) -> &str {
        &self.name
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        if input.len() != 3 || input[2] != self.channels {
            return shape_err(format!(
                "`{}` expects [H, W, {}], got {input:?}",
                self.name, self.channels
            ));
        }
        Ok(input.to_vec())
    }

    fn forward(&mut self, params: &mut ParamStore, x: &Tensor, _mode: Mode) -> Result<Tensor> {
        let y = self.infer(params, x)?;
        self.cache = Some(x.clone());
        Ok(y)
    }

    fn infer(&self, params: &ParamStore, x: &Tensor) -> Result<Tensor> {
        expect_channels(x, self.channels, &self.name)?;
        depthwise_forward(x, params.get(&self.weight)?, 1, Padding::Same)
    }

    fn backward(
        &mut self,
        params: &ParamStore,
        upstream: &Tensor,
        grads: &mut GradStore,
    ) -> Result<Tensor> {
        let x = self.cache.take().ok_or_else(|| missing_cache(&self.name))?;
        let (dx, dw) =
            depthwise_backward(&x, params.get(&self.weight)?, upstream, 1, Padding::Same)?;
        grads.accumulate(&self.weight, dw)?;
        Ok(dx)
    }
}
