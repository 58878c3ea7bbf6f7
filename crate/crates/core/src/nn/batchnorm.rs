//! Per-channel batch normalization over every non-channel axis.

use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::Tensor;

pub const DEFAULT_MOMENTUM: f64 = 0.99;
pub const DEFAULT_EPSILON: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormParams<R = f32> {
    pub gamma: Tensor<R>,
    pub beta: Tensor<R>,
    pub running_mean: Tensor<R>,
    pub running_var: Tensor<R>,
    pub momentum: f64,
    pub epsilon: f64,
}

/// Per-channel batch mean and population variance seen by a train-mode pass.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BnCache<R> {
    x_hat: Tensor<R>,
    inv_std: Vec<f64>,
    stats: BatchStats,
}

impl<R> BnCache<R> {
    pub fn stats(&self) -> &BatchStats {
        &self.stats
    }
}

impl<R: Real> BatchNormParams<R> {
    pub fn new(channels: usize) -> Result<Self> {
        Ok(BatchNormParams {
            gamma: Tensor::full(&[channels], R::one())?,
            beta: Tensor::zeros(&[channels])?,
            running_mean: Tensor::zeros(&[channels])?,
            running_var: Tensor::full(&[channels], R::one())?,
            momentum: DEFAULT_MOMENTUM,
            epsilon: DEFAULT_EPSILON,
        })
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    /// Learnable scale and shift plus the two running statistics.
    pub fn param_count(&self) -> usize {
        4 * self.channels()
    }

    pub fn validate(&self) -> Result<()> {
        let c = [self.channels()];
        self.beta.expect_shape("batchnorm beta", &c)?;
        self.running_mean.expect_shape("batchnorm running_mean", &c)?;
        self.running_var.expect_shape("batchnorm running_var", &c)?;
        if self.running_var.data().iter().any(|&v| !(v >= R::zero())) {
            return Err(Error::invalid("batchnorm running_var must be non-negative"));
        }
        if !(self.momentum > 0.0 && self.momentum < 1.0) || !(self.epsilon > 0.0) {
            return Err(Error::invalid("batchnorm momentum must be in (0,1) and epsilon positive"));
        }
        Ok(())
    }

    fn check_input(&self, x: &Tensor<R>) -> Result<usize> {
        self.validate()?;
        let c = self.channels();
        if x.channels() != c {
            let mut expected = x.shape().to_vec();
            *expected.last_mut().unwrap() = c;
            return Err(Error::shape("batchnorm input", &expected, x.shape()));
        }
        Ok(c)
    }

    fn affine(&self, x: &Tensor<R>, mean: &[f64], inv_std: &[f64]) -> (Tensor<R>, Tensor<R>) {
        let c = mean.len();
        let mut x_hat = x.clone();
        let mut y = x.clone();
        for (xh, yv) in x_hat.data_mut().chunks_exact_mut(c).zip(y.data_mut().chunks_exact_mut(c)) {
            for j in 0..c {
                let n = (xh[j].as_f64() - mean[j]) * inv_std[j];
                xh[j] = R::of_f64(n);
                yv[j] = R::of_f64(n * self.gamma.data()[j].as_f64() + self.beta.data()[j].as_f64());
            }
        }
        (y, x_hat)
    }

    /// Normalizes with the statistics of `x` itself. Does not touch the
    /// running statistics; feed the cache to [`update_running`](Self::update_running).
    pub fn forward_train(&self, x: &Tensor<R>) -> Result<(Tensor<R>, BnCache<R>)> {
        let c = self.check_input(x)?;
        let n = (x.len() / c) as f64;
        let mut mean = vec![0.0; c];
        for px in x.data().chunks_exact(c) {
            for (m, v) in mean.iter_mut().zip(px) {
                *m += v.as_f64();
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; c];
        for px in x.data().chunks_exact(c) {
            for j in 0..c {
                let d = px[j].as_f64() - mean[j];
                var[j] += d * d;
            }
        }
        var.iter_mut().for_each(|v| *v /= n);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / Float::sqrt(v + self.epsilon)).collect();
        let (y, x_hat) = self.affine(x, &mean, &inv_std);
        Ok((
            y,
            BnCache {
                x_hat,
                inv_std,
                stats: BatchStats { mean, var },
            },
        ))
    }

    pub fn forward_infer(&self, x: &Tensor<R>) -> Result<Tensor<R>> {
        self.check_input(x)?;
        let mean: Vec<f64> = self.running_mean.data().iter().map(|v| v.as_f64()).collect();
        let inv_std: Vec<f64> = self
            .running_var
            .data()
            .iter()
            .map(|v| 1.0 / Float::sqrt(v.as_f64() + self.epsilon))
            .collect();
        Ok(self.affine(x, &mean, &inv_std).0)
    }

    /// `running ← momentum·running + (1 − momentum)·batch`.
    pub fn update_running(&mut self, stats: &BatchStats) {
        let m = self.momentum;
        for (r, &b) in self.running_mean.data_mut().iter_mut().zip(&stats.mean) {
            *r = R::of_f64(m * r.as_f64() + (1.0 - m) * b);
        }
        for (r, &b) in self.running_var.data_mut().iter_mut().zip(&stats.var) {
            *r = R::of_f64(m * r.as_f64() + (1.0 - m) * b);
        }
    }

    /// Gradients of a train-mode pass: `(grad_x, grad_gamma, grad_beta)`.
    pub fn backward(&self, cache: &BnCache<R>, grad_y: &Tensor<R>) -> Result<(Tensor<R>, Tensor<R>, Tensor<R>)> {
        grad_y.expect_shape("batchnorm grad", cache.x_hat.shape())?;
        let c = self.channels();
        let n = (grad_y.len() / c) as f64;
        let mut sum_g = vec![0.0; c];
        let mut sum_gx = vec![0.0; c];
        for (g, xh) in grad_y.data().chunks_exact(c).zip(cache.x_hat.data().chunks_exact(c)) {
            for j in 0..c {
                let gv = g[j].as_f64();
                sum_g[j] += gv;
                sum_gx[j] += gv * xh[j].as_f64();
            }
        }
        let mut grad_x = grad_y.clone();
        for (gx, xh) in grad_x.data_mut().chunks_exact_mut(c).zip(cache.x_hat.data().chunks_exact(c)) {
            for j in 0..c {
                let scale = self.gamma.data()[j].as_f64() * cache.inv_std[j] / n;
                let v = n * gx[j].as_f64() - sum_g[j] - xh[j].as_f64() * sum_gx[j];
                gx[j] = R::of_f64(scale * v);
            }
        }
        Ok((
            grad_x,
            Tensor::from_f64(&[c], &sum_gx)?,
            Tensor::from_f64(&[c], &sum_g)?,
        ))
    }
}

/// Mode-dispatching forward. Train mode also folds the batch statistics into
/// the running averages, so it needs exclusive access to `params`.
pub fn batchnorm_forward<R: Real>(x: &Tensor<R>, params: &mut BatchNormParams<R>, mode: Mode) -> Result<Tensor<R>> {
    match mode {
        Mode::Train => {
            let (y, cache) = params.forward_train(x)?;
            params.update_running(cache.stats());
            Ok(y)
        }
        Mode::Infer => params.forward_infer(x),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn channel_moments(y: &Tensor<f64>, c: usize) -> (Vec<f64>, Vec<f64>) {
        let n = (y.len() / c) as f64;
        let mut mean = vec![0.0; c];
        let mut var = vec![0.0; c];
        for px in y.data().chunks_exact(c) {
            for j in 0..c {
                mean[j] += px[j] / n;
            }
        }
        for px in y.data().chunks_exact(c) {
            for j in 0..c {
                var[j] += (px[j] - mean[j]).powi(2) / n;
            }
        }
        (mean, var)
    }

    fn sample() -> Tensor<f64> {
        let data: Vec<f64> = (0..48).map(|i| ((i * 37 % 11) as f64) * 0.3 - 1.0 + (i % 3) as f64).collect();
        Tensor::from_vec(&[2, 2, 4, 3], data).unwrap()
    }

    #[test]
    fn train_mode_standardizes() {
        let mut p = BatchNormParams::<f64>::new(3).unwrap();
        p.epsilon = 1e-12;
        let (y, _) = p.forward_train(&sample()).unwrap();
        let (mean, var) = channel_moments(&y, 3);
        for j in 0..3 {
            assert!(mean[j].abs() < 1e-6);
            assert!((var[j] - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn affine_law() {
        let mut p = BatchNormParams::<f64>::new(3).unwrap();
        p.epsilon = 1e-12;
        let (normed, _) = p.forward_train(&sample()).unwrap();
        p.gamma.fill(2.0);
        p.beta.fill(3.0);
        let (y, _) = p.forward_train(&normed).unwrap();
        let (mean, var) = channel_moments(&y, 3);
        for j in 0..3 {
            assert!((mean[j] - 3.0).abs() < 1e-6);
            assert!((var[j] - 4.0).abs() < 1e-5);
        }
    }

    #[test]
    fn infer_mode_uses_running_stats() {
        let mut p = BatchNormParams::<f64>::new(1).unwrap();
        p.running_mean = Tensor::from_vec(&[1], vec![0.5]).unwrap();
        p.running_var = Tensor::from_vec(&[1], vec![4.0]).unwrap();
        p.gamma.fill(1.5);
        p.beta.fill(-0.25);
        let x = Tensor::from_vec(&[2, 1], vec![1.0, -3.0]).unwrap();
        let y = p.forward_infer(&x).unwrap();
        let s = (4.0f64 + 1e-3).sqrt();
        assert_eq!(y.data()[0], (1.0 - 0.5) / s * 1.5 - 0.25);
        assert_eq!(y.data()[1], (-3.0 - 0.5) / s * 1.5 - 0.25);
    }

    #[test]
    fn running_stats_follow_momentum() {
        let mut p = BatchNormParams::<f64>::new(1).unwrap();
        let x = Tensor::from_vec(&[2, 1], vec![1.0, 3.0]).unwrap();
        batchnorm_forward(&x, &mut p, Mode::Train).unwrap();
        assert!((p.running_mean.data()[0] - 0.01 * 2.0).abs() < 1e-15);
        assert!((p.running_var.data()[0] - (0.99 + 0.01 * 1.0)).abs() < 1e-15);
        let before = p.clone();
        batchnorm_forward(&x, &mut p, Mode::Infer).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn rejects_bad_channels_and_negative_variance() {
        let mut p = BatchNormParams::<f64>::new(2).unwrap();
        assert!(p.forward_infer(&Tensor::zeros(&[4, 3]).unwrap()).is_err());
        p.running_var.data_mut()[0] = -1.0;
        assert!(p.forward_infer(&Tensor::zeros(&[4, 2]).unwrap()).is_err());
    }
}
