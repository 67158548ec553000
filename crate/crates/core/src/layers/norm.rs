use super::{missing_cache, register, Layer, Mode};
use crate::error::{shape_err, Error, Result};
use crate::params::{GradStore, ParamKind, ParamStore};
use crate::tensor::Tensor;

pub const BN_EPSILON: f64 = 1e-5;
/// Weight of the previous running statistic in the update.
pub const BN_MOMENTUM: f64 = 0.9;

/// Per-channel batch normalization over every axis but the last.
#[derive(Debug)]
pub struct BatchNorm {
    name: String,
    channels: usize,
    scale: String,
    shift: String,
    running_mean: String,
    running_var: String,
    cache: Option<NormCache>,
}

#[derive(Debug)]
struct NormCache {
    normalized: Tensor,
    inv_std: Vec<f64>,
    batch_stats: bool,
}

impl BatchNorm {
    pub fn new(name: impl Into<String>, channels: usize, params: &mut ParamStore) -> Self {
        let name = name.into();
        let scale = register(
            params,
            &format!("{name}.scale"),
            Tensor::full(&[channels], 1.0),
            ParamKind::NormScale,
        );
        let shift = register(
            params,
            &format!("{name}.shift"),
            Tensor::zeros(&[channels]),
            ParamKind::NormShift,
        );
        let running_mean = register(
            params,
            &format!("{name}.running_mean"),
            Tensor::zeros(&[channels]),
            ParamKind::RunningStat,
        );
        let running_var = register(
            params,
            &format!("{name}.running_var"),
            Tensor::full(&[channels], 1.0),
            ParamKind::RunningStat,
        );
        Self {
            name,
            channels,
            scale,
            shift,
            running_mean,
            running_var,
            cache: None,
        }
    }

    fn check(&self, x: &Tensor) -> Result<usize> {
        if x.rank() < 2 || *x.shape().last().unwrap() != self.channels {
            return shape_err(format!(
                "`{}` expects {} channels on the last axis, got {:?}",
                self.name,
                self.channels,
                x.shape()
            ));
        }
        Ok(x.len() / self.channels)
    }

    /// Normalizes with the given statistics and applies scale/shift.
    fn apply(
        &self,
        params: &ParamStore,
        x: &Tensor,
        mean: &[f64],
        inv_std: &[f64],
    ) -> Result<(Tensor, Tensor)> {
        let gamma = params.get(&self.scale)?.data();
        let beta = params.get(&self.shift)?.data();
        let c = self.channels;
        let mut xhat = x.clone();
        let mut y = x.clone();
        for (hrow, yrow) in xhat.data_mut().chunks_mut(c).zip(y.data_mut().chunks_mut(c)) {
            for ch in 0..c {
                let n = (hrow[ch] - mean[ch]) * inv_std[ch];
                hrow[ch] = n;
                yrow[ch] = gamma[ch] * n + beta[ch];
            }
        }
        Ok((y, xhat))
    }

    fn running(&self, params: &ParamStore) -> Result<(Vec<f64>, Vec<f64>)> {
        let mean = params.get(&self.running_mean)?.data().to_vec();
        let inv_std = params
            .get(&self.running_var)?
            .data()
            .iter()
            .map(|v| 1.0 / (v + BN_EPSILON).sqrt())
            .collect();
        Ok((mean, inv_std))
    }
}

impl Layer for BatchNorm {
    fn name(&self) -> &str {
        &self.name
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        if input.last() != Some(&self.channels) {
            return shape_err(format!(
                "`{}` expects {} channels, got {input:?}",
                self.name, self.channels
            ));
        }
        Ok(input.to_vec())
    }

    fn forward(&mut self, params: &mut ParamStore, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let rows = self.check(x)?;
        let c = self.channels;
        let (mean, inv_std, batch_stats) = match mode {
            Mode::Eval => {
                let (m, s) = self.running(params)?;
                (m, s, false)
            }
            Mode::Train { .. } => {
                if x.shape()[0] < 2 {
                    return Err(Error::DegenerateBatch(format!(
                        "`{}` needs at least 2 samples in train mode, got {}",
                        self.name,
                        x.shape()[0]
                    )));
                }
                let mut mean = vec![0.0; c];
                for row in x.data().chunks(c) {
                    for (m, v) in mean.iter_mut().zip(row) {
                        *m += v;
                    }
                }
                mean.iter_mut().for_each(|m| *m /= rows as f64);
                let mut var = vec![0.0; c];
                for row in x.data().chunks(c) {
                    for ch in 0..c {
                        let d = row[ch] - mean[ch];
                        var[ch] += d * d;
                    }
                }
                var.iter_mut().for_each(|v| *v /= rows as f64);

                let rm = params.get_mut(&self.running_mean)?;
                for (r, m) in rm.data_mut().iter_mut().zip(&mean) {
                    *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * m;
                }
                let rv = params.get_mut(&self.running_var)?;
                for (r, v) in rv.data_mut().iter_mut().zip(&var) {
                    *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * v;
                }
                let inv_std = var.iter().map(|v| 1.0 / (v + BN_EPSILON).sqrt()).collect();
                (mean, inv_std, true)
            }
        };
        let (y, normalized) = self.apply(params, x, &mean, &inv_std)?;
        self.cache = Some(NormCache {
            normalized,
            inv_std,
            batch_stats,
        });
        Ok(y)
    }

    fn infer(&self, params: &ParamStore, x: &Tensor) -> Result<Tensor> {
        self.check(x)?;
        let (mean, inv_std) = self.running(params)?;
        Ok(self.apply(params, x, &mean, &inv_std)?.0)
    }

    fn backward(
        &mut self,
        params: &ParamStore,
        upstream: &Tensor,
        grads: &mut GradStore,
    ) -> Result<Tensor> {
        let cache = self.cache.take().ok_or_else(|| missing_cache(&self.name))?;
        upstream.expect_same_shape(&cache.normalized)?;
        let c = self.channels;
        let rows = (upstream.len() / c) as f64;
        let gamma = params.get(&self.scale)?.data();

        let mut dgamma = vec![0.0; c];
        let mut dbeta = vec![0.0; c];
        for (urow, hrow) in upstream.data().chunks(c).zip(cache.normalized.data().chunks(c)) {
            for ch in 0..c {
                dgamma[ch] += urow[ch] * hrow[ch];
                dbeta[ch] += urow[ch];
            }
        }

        let mut dx = upstream.clone();
        for (drow, hrow) in dx.data_mut().chunks_mut(c).zip(cache.normalized.data().chunks(c)) {
            for ch in 0..c {
                let g = gamma[ch] * cache.inv_std[ch];
                drow[ch] = if cache.batch_stats {
                    g * (drow[ch] - dbeta[ch] / rows - hrow[ch] * dgamma[ch] / rows)
                } else {
                    g * drow[ch]
                };
            }
        }
        grads.accumulate(&self.scale, Tensor::new(vec![c], dgamma)?)?;
        grads.accumulate(&self.shift, Tensor::new(vec![c], dbeta)?)?;
        Ok(dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(shape, |_| rng.random_range(-2.0..3.0))
    }

    #[test]
    fn train_mode_standardizes_each_channel() {
        let mut params = ParamStore::new();
        let mut bn = BatchNorm::new("bn", 3, &mut params);
        let y = bn
            .forward(&mut params, &random(&[4, 3, 3, 3], 1), Mode::Train { step: 0 })
            .unwrap();
        for ch in 0..3 {
            let vals: Vec<f64> = y.data().iter().skip(ch).step_by(3).cloned().collect();
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-3, "variance {var}");
        }
    }

    #[test]
    fn constant_channel_maps_to_shift() {
        let mut params = ParamStore::new();
        let mut bn = BatchNorm::new("bn", 1, &mut params);
        params.get_mut("bn.shift").unwrap().data_mut()[0] = 0.7;
        let y = bn
            .forward(&mut params, &Tensor::full(&[3, 2, 2, 1], 4.0), Mode::Train { step: 0 })
            .unwrap();
        assert!(y.data().iter().all(|&v| (v - 0.7).abs() < 1e-12));
    }

    #[test]
    fn running_stats_follow_momentum_recurrence() {
        let mut params = ParamStore::new();
        let mut bn = BatchNorm::new("bn", 1, &mut params);
        let batches = [
            Tensor::new(vec![2, 1], vec![1.0, 3.0]).unwrap(),
            Tensor::new(vec![2, 1], vec![-2.0, 6.0]).unwrap(),
        ];
        let (mut rm, mut rv) = (0.0, 1.0);
        for b in &batches {
            bn.forward(&mut params, b, Mode::Train { step: 0 }).unwrap();
            let (a, c) = (b.data()[0], b.data()[1]);
            let m = (a + c) / 2.0;
            let v = ((a - m).powi(2) + (c - m).powi(2)) / 2.0;
            rm = 0.9 * rm + 0.1 * m;
            rv = 0.9 * rv + 0.1 * v;
        }
        assert!((params.get("bn.running_mean").unwrap().data()[0] - rm).abs() < 1e-15);
        assert!((params.get("bn.running_var").unwrap().data()[0] - rv).abs() < 1e-15);
        assert!(!params.param("bn.running_var").unwrap().kind.trainable());
    }

    #[test]
    fn single_sample_train_batch_is_degenerate() {
        let mut params = ParamStore::new();
        let mut bn = BatchNorm::new("bn", 2, &mut params);
        let r = bn.forward(&mut params, &Tensor::zeros(&[1, 4, 4, 2]), Mode::Train { step: 0 });
        assert!(matches!(r, Err(Error::DegenerateBatch(_))));
        assert!(bn.forward(&mut params, &Tensor::zeros(&[1, 4, 4, 2]), Mode::Eval).is_ok());
    }

    #[test]
    fn eval_mode_is_deterministic_and_matches_infer() {
        let mut params = ParamStore::new();
        let mut bn = BatchNorm::new("bn", 2, &mut params);
        let x = random(&[3, 2, 2, 2], 2);
        bn.forward(&mut params, &x, Mode::Train { step: 0 }).unwrap();
        let a = bn.forward(&mut params, &x, Mode::Eval).unwrap();
        let b = bn.infer(&params, &x).unwrap();
        assert_eq!(a, b);
    }
}
