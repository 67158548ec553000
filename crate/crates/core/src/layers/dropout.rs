use super::{missing_cache, Layer, Mode};
use crate::error::{shape_err, Error, Result};
use crate::params::{GradStore, ParamStore};
use crate::rng::{counter_uniform, derive_seed, splitmix64};
use crate::tensor::Tensor;

fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("dropout rate must be in [0, 1), got {rate}")));
    }
    Ok(())
}

/// Inverted dropout: kept activations are scaled by `1 / (1 - rate)` at train
/// time. The mask is a pure function of `(key, step, element index)`.
pub fn dropout(x: &Tensor, rate: f64, mode: Mode, key: u64) -> Result<Tensor> {
    x.mul(&mask(x.shape(), rate, mode, key)?)
}

fn mask(shape: &[usize], rate: f64, mode: Mode, key: u64) -> Result<Tensor> {
    check_rate(rate)?;
    Ok(match mode {
        Mode::Train { step } if rate > 0.0 => {
            let k = key ^ splitmix64(step);
            let keep = 1.0 / (1.0 - rate);
            Tensor::from_fn(shape, |i| {
                if counter_uniform(k, i as u64) < rate {
                    0.0
                } else {
                    keep
                }
            })
        }
        _ => Tensor::full(shape, 1.0),
    })
}

#[derive(Debug)]
pub struct Dropout {
    name: String,
    rate: f64,
    key: u64,
    cache: Option<Tensor>,
}

impl Dropout {
    pub fn new(name: impl Into<String>, rate: f64, seed: u64) -> Result<Self> {
        check_rate(rate)?;
        let name = name.into();
        Ok(Self {
            key: derive_seed(seed, &name),
            name,
            rate,
            cache: None,
        })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }
}

impl Layer for Dropout {
    fn name(&self) -> &str {
        &self.name
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        Ok(input.to_vec())
    }

    fn forward(&mut self, _params: &mut ParamStore, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let m = mask(x.shape(), self.rate, mode, self.key)?;
        let y = x.mul(&m)?;
        self.cache = Some(m);
        Ok(y)
    }

    fn infer(&self, _params: &ParamStore, x: &Tensor) -> Result<Tensor> {
        Ok(x.clone())
    }

    fn backward(
        &mut self,
        _params: &ParamStore,
        upstream: &Tensor,
        _grads: &mut GradStore,
    ) -> Result<Tensor> {
        let m = self.cache.take().ok_or_else(|| missing_cache(&self.name))?;
        if m.shape() != upstream.shape() {
            return shape_err(format!("`{}` upstream shape mismatch", self.name));
        }
        upstream.mul(&m)
    }
}
