use super::{missing_cache, Layer, Mode};
use crate::error::{shape_err, Result};
use crate::params::{GradStore, ParamStore};
use crate::tensor::Tensor;

#[derive(Debug)]
pub struct Relu {
    name: String,
    cache: Option<Tensor>,
}

impl Relu {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            cache: None,
        }
    }
}

impl Layer for Relu {
    fn name(&self) -> &str {
        &self.name
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        Ok(input.to_vec())
    }

    fn forward(&mut self, _params: &mut ParamStore, x: &Tensor, _mode: Mode) -> Result<Tensor> {
        self.cache = Some(x.clone());
        Ok(x.relu())
    }

    fn infer(&self, _params: &ParamStore, x: &Tensor) -> Result<Tensor> {
        Ok(x.relu())
    }

    fn backward(
        &mut self,
        _params: &ParamStore,
        upstream: &Tensor,
        _grads: &mut GradStore,
    ) -> Result<Tensor> {
        let x = self.cache.take().ok_or_else(|| missing_cache(&self.name))?;
        upstream.zip_map(&x, |g, v| if v > 0.0 { g } else { 0.0 })
    }
}

/// `[B, ...] -> [B, prod(...)]`.
#[derive(Debug)]
pub struct Flatten {
    name: String,
    cache: Option<Vec<usize>>,
}

impl Flatten {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            cache: None,
        }
    }
}

impl Layer for Flatten {
    fn name(&self) -> &str {
        &self.name
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        Ok(vec![input.iter().product()])
    }

    fn forward(&mut self, params: &mut ParamStore, x: &Tensor, _mode: Mode) -> Result<Tensor> {
        let y = self.infer(params, x)?;
        self.cache = Some(x.shape().to_vec());
        Ok(y)
    }

    fn infer(&self, _params: &ParamStore, x: &Tensor) -> Result<Tensor> {
        let b = x.shape()[0];
        x.reshape(&[b, x.len() / b])
    }

    fn backward(
        &mut self,
        _params: &ParamStore,
        upstream: &Tensor,
        _grads: &mut GradStore,
    ) -> Result<Tensor> {
        let shape = self.cache.take().ok_or_else(|| missing_cache(&self.name))?;
        if upstream.len() != shape.iter().product::<usize>() {
            return shape_err(format!("`{}` upstream size mismatch", self.name));
        }
        upstream.reshape(&shape)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_backward_passes_positive_inputs() {
        let mut r = Relu::new("r");
        let mut p = ParamStore::new();
        let x = Tensor::new(vec![1, 3], vec![0.5, 2.0, 7.0]).unwrap();
        r.forward(&mut p, &x, Mode::Eval).unwrap();
        let g = Tensor::new(vec![1, 3], vec![1.0, -2.0, 3.0]).unwrap();
        assert_eq!(r.backward(&p, &g, &mut GradStore::new()).unwrap(), g);
    }

    #[test]
    fn backward_without_forward_is_a_state_error() {
        let mut r = Relu::new("r");
        let err = r
            .backward(&ParamStore::new(), &Tensor::zeros(&[1, 1]), &mut GradStore::new())
            .unwrap_err();
        assert!(matches!(err, crate::Error::State(_)));
    }
}
