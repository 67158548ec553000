use super::{he_normal, missing_cache, register, Layer, Mode};
use crate::error::{shape_err, Result};
use crate::params::{GradStore, ParamKind, ParamStore};
use crate::tensor::{matmul_into, Tensor};

/// `y = x w + b` for `x: [B, in]`, `w: [in, out]`.
pub fn dense_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    x.expect_rank(2, "dense")?;
    w.expect_rank(2, "dense weight")?;
    let (batch, fin) = (x.shape()[0], x.shape()[1]);
    let fout = w.shape()[1];
    if w.shape()[0] != fin || b.shape() != [fout] {
        return shape_err(format!(
            "dense: input {:?} incompatible with weight {:?} / bias {:?}",
            x.shape(),
            w.shape(),
            b.shape()
        ));
    }
    let mut out: Vec<f64> = b.data().iter().cycle().take(batch * fout).cloned().collect();
    matmul_into(x.data(), w.data(), &mut out, batch, fin, fout);
    Tensor::new(vec![batch, fout], out)
}

#[derive(Debug)]
pub struct Dense {
    name: String,
    inputs: usize,
    units: usize,
    weight: String,
    bias: String,
    cache: Option<Tensor>,
}

impl Dense {
    pub fn new(
        name: impl Into<String>,
        inputs: usize,
        units: usize,
        params: &mut ParamStore,
        seed: u64,
    ) -> Self {
        let name = name.into();
        let wname = format!("{name}.weight");
        let w = he_normal(&[inputs, units], inputs, seed, &wname);
        let weight = register(params, &wname, w, ParamKind::Weight);
        let bias = register(
            params,
            &format!("{name}.bias"),
            Tensor::zeros(&[units]),
            ParamKind::Bias,
        );
        Self {
            name,
            inputs,
            units,
            weight,
            bias,
            cache: None,
        }
    }
}

impl Layer for Dense {
    fn name(&self) -> &str {
        &self.name
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        if input != [self.inputs] {
            return shape_err(format!(
                "`{}` expects [{}] features, got {input:?}",
                self.name, self.inputs
            ));
        }
        Ok(vec![self.units])
    }

    fn forward(&mut self, params: &mut ParamStore, x: &Tensor, _mode: Mode) -> Result<Tensor> {
        let y = self.infer(params, x)?;
        self.cache = Some(x.clone());
        Ok(y)
    }

    fn infer(&self, params: &ParamStore, x: &Tensor) -> Result<Tensor> {
        dense_forward(x, params.get(&self.weight)?, params.get(&self.bias)?)
    }

    fn backward(
        &mut self,
        params: &ParamStore,
        upstream: &Tensor,
        grads: &mut GradStore,
    ) -> Result<Tensor> {
        let x = self.cache.take().ok_or_else(|| missing_cache(&self.name))?;
        let batch = x.shape()[0];
        if upstream.shape() != [batch, self.units] {
            return shape_err(format!(
                "`{}` upstream gradient must be [{batch}, {}], got {:?}",
                self.name,
                self.units,
                upstream.shape()
            ));
        }
        let w = params.get(&self.weight)?;
        // dx = g w^T, dw = x^T g, db = sum_b g
        let dx = upstream.matmul(&w.transpose2()?)?;
        let dw = x.transpose2()?.matmul(upstream)?;
        let mut db = vec![0.0; self.units];
        for row in upstream.data().chunks(self.units) {
            for (d, g) in db.iter_mut().zip(row) {
                *d += g;
            }
        }
        grads.accumulate(&self.weight, dw)?;
        grads.accumulate(&self.bias, Tensor::new(vec![self.units], db)?)?;
        Ok(dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matches_matmul_plus_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Tensor::from_fn(&[4, 5], |_| rng.random_range(-1.0..1.0));
        let w = Tensor::from_fn(&[5, 3], |_| rng.random_range(-1.0..1.0));
        let b = Tensor::from_fn(&[3], |_| rng.random_range(-1.0..1.0));
        let y = dense_forward(&x, &w, &b).unwrap();
        let xw = x.matmul(&w).unwrap();
        for i in 0..4 {
            for j in 0..3 {
                assert!((y.get(&[i, j]) - xw.get(&[i, j]) - b.get(&[j])).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn weight_gradient_is_summed_outer_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut params = ParamStore::new();
        let mut d = Dense::new("fc", 3, 2, &mut params, 1);
        let x = Tensor::from_fn(&[4, 3], |_| rng.random_range(-1.0..1.0));
        let g = Tensor::from_fn(&[4, 2], |_| rng.random_range(-1.0..1.0));
        d.forward(&mut params, &x, Mode::Eval).unwrap();
        let mut grads = GradStore::new();
        d.backward(&params, &g, &mut grads).unwrap();
        let dw = grads.get("fc.weight").unwrap();
        for i in 0..3 {
            for j in 0..2 {
                let expected: f64 = (0..4).map(|b| x.get(&[b, i]) * g.get(&[b, j])).sum();
                assert!((dw.get(&[i, j]) - expected).abs() < 1e-14);
            }
        }
    }
}
