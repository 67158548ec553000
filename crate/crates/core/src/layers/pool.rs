use super::{expect_nhwc, missing_cache, Layer, Mode};
use crate::error::{shape_err, Error, Result};
use crate::params::{GradStore, ParamStore};
use crate::tensor::Tensor;

/// Non-overlapping max pooling (stride == window), trailing rows/columns
/// that do not fill a window are dropped. Returns the pooled tensor and the
/// flat input index of each winner (first maximum on ties).
fn pool_with_argmax(x: &Tensor, window: usize) -> Result<(Tensor, Vec<usize>)> {
    let [b, h, w, c] = expect_nhwc(x, "max_pool2d")?;
    if window == 0 {
        return Err(Error::Config("pool window must be positive".into()));
    }
    let (oh, ow) = (h / window, w / window);
    if oh == 0 || ow == 0 {
        return shape_err(format!("pool window {window} exceeds input {h}x{w}"));
    }
    let xd = x.data();
    let mut out = vec![f64::NEG_INFINITY; b * oh * ow * c];
    let mut arg = vec![0usize; out.len()];
    for bi in 0..b {
        for i in 0..oh {
            for j in 0..ow {
                let obase = ((bi * oh + i) * ow + j) * c;
                for di in 0..window {
                    for dj in 0..window {
                        let ibase = ((bi * h + i * window + di) * w + j * window + dj) * c;
                        for ch in 0..c {
                            let v = xd[ibase + ch];
                            if v > out[obase + ch] {
                                out[obase + ch] = v;
                                arg[obase + ch] = ibase + ch;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok((Tensor::new(vec![b, oh, ow, c], out)?, arg))
}

pub fn max_pool2d(x: &Tensor, window: usize) -> Result<Tensor> {
    Ok(pool_with_argmax(x, window)?.0)
}

#[derive(Debug)]
pub struct MaxPool2d {
    name: String,
    window: usize,
    cache: Option<(Vec<usize>, Vec<usize>)>,
}

impl MaxPool2d {
    pub fn new(name: impl Into<String>, window: usize) -> Self {
        Self {
            name: name.into(),
            window,
            cache: None,
        }
    }
}

impl Layer for MaxPool2d {
    fn name(&self) -> &str {
        &self.name
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        if input.len() != 3 || input[0] < self.window || input[1] < self.window {
            return shape_err(format!(
                "`{}` (window {}) cannot pool {input:?}",
                self.name, self.window
            ));
        }
        Ok(vec![input[0] / self.window, input[1] / self.window, input[2]])
    }

    fn forward(&mut self, _params: &mut ParamStore, x: &Tensor, _mode: Mode) -> Result<Tensor> {
        let (y, arg) = pool_with_argmax(x, self.window)?;
        self.cache = Some((x.shape().to_vec(), arg));
        Ok(y)
    }

    fn infer(&self, _params: &ParamStore, x: &Tensor) -> Result<Tensor> {
        max_pool2d(x, self.window)
    }

    fn backward(
        &mut self,
        _params: &ParamStore,
        upstream: &Tensor,
        _grads: &mut GradStore,
    ) -> Result<Tensor> {
        let (shape, arg) = self.cache.take().ok_or_else(|| missing_cache(&self.name))?;
        if upstream.len() != arg.len() {
            return shape_err(format!(
                "`{}` upstream gradient has {} elements, expected {}",
                self.name,
                upstream.len(),
                arg.len()
            ));
        }
        let mut dx = Tensor::zeros(&shape);
        let d = dx.data_mut();
        for (&src, &g) in arg.iter().zip(upstream.data()) {
            d[src] += g;
        }
        Ok(dx)
    }
}

/// `[B, H, W, C] -> [B, C]` spatial mean.
#[derive(Debug)]
pub struct GlobalAvgPool {
    name: String,
    cache: Option<Vec<usize>>,
}

impl GlobalAvgPool {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            cache: None,
        }
    }
}

impl Layer for GlobalAvgPool {
    fn name(&self) -> &str {
        &self.name
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        if input.len() != 3 {
            return shape_err(format!("`{}` expects [H, W, C], got {input:?}", self.name));
        }
        Ok(vec![input[2]])
    }

    fn forward(&mut self, params: &mut ParamStore, x: &Tensor, _mode: Mode) -> Result<Tensor> {
        let y = self.infer(params, x)?;
        self.cache = Some(x.shape().to_vec());
        Ok(y)
    }

    fn infer(&self, _params: &ParamStore, x: &Tensor) -> Result<Tensor> {
        let [b, h, w, c] = expect_nhwc(x, "global_avg_pool")?;
        let mut out = vec![0.0; b * c];
        for (bi, plane) in x.data().chunks(h * w * c).enumerate() {
            for row in plane.chunks(c) {
                for (o, v) in out[bi * c..(bi + 1) * c].iter_mut().zip(row) {
                    *o += v;
                }
            }
        }
        let inv = 1.0 / (h * w) as f64;
        out.iter_mut().for_each(|v| *v *= inv);
        Tensor::new(vec![b, c], out)
    }

    fn backward(
        &mut self,
        _params: &ParamStore,
        upstream: &Tensor,
        _grads: &mut GradStore,
    ) -> Result<Tensor> {
        let shape = self.cache.take().ok_or_else(|| missing_cache(&self.name))?;
        let (b, c) = (shape[0], shape[3]);
        let hw = shape[1] * shape[2];
        if upstream.shape() != [b, c] {
            return shape_err(format!(
                "`{}` upstream gradient must be [{b}, {c}], got {:?}",
                self.name,
                upstream.shape()
            ));
        }
        let inv = 1.0 / hw as f64;
        let u = upstream.data();
        Ok(Tensor::from_fn(&shape, |i| {
            let bi = i / (hw * c);
            u[bi * c + i % c] * inv
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_window_takes_maximum() {
        let x = Tensor::new(vec![1, 2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(max_pool2d(&x, 2).unwrap().data(), &[4.0]);
    }

    #[test]
    fn nested_pools_compose() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::from_fn(&[2, 8, 8, 3], |_| rng.random_range(-1.0..1.0));
        let twice = max_pool2d(&max_pool2d(&x, 2).unwrap(), 2).unwrap();
        assert_eq!(twice, max_pool2d(&x, 4).unwrap());
    }

    #[test]
    fn gradient_routes_to_winner() {
        let mut p = ParamStore::new();
        let mut pool = MaxPool2d::new("pool", 2);
        let x = Tensor::new(vec![1, 2, 2, 1], vec![1.0, 5.0, 3.0, 4.0]).unwrap();
        pool.forward(&mut p, &x, Mode::Eval).unwrap();
        let dx = pool
            .backward(&p, &Tensor::full(&[1, 1, 1, 1], 2.0), &mut GradStore::new())
            .unwrap();
        assert_eq!(dx.data(), &[0.0, 2.0, 0.0, 0.0]);
        assert!(pool
            .backward(&p, &Tensor::full(&[1, 1, 1, 1], 2.0), &mut GradStore::new())
            .is_err());
    }

    #[test]
    fn global_average() {
        let x = Tensor::new(vec![1, 2, 1, 2], vec![1.0, 10.0, 3.0, 20.0]).unwrap();
        let y = GlobalAvgPool::new("gap").infer(&ParamStore::new(), &x).unwrap();
        assert_eq!(y.data(), &[2.0, 15.0]);
    }
}
