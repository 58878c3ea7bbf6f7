//! Adam with global-norm gradient clipping.

use alloc::vec::Vec;

use num_traits::Float;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::{global_norm, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub clipnorm: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clipnorm: 1.0,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |b: f64| b > 0.0 && b < 1.0;
        if !(self.lr > 0.0) || !in_unit(self.beta1) || !in_unit(self.beta2) || !(self.epsilon > 0.0) || !(self.clipnorm > 0.0)
        {
            return Err(Error::invalid("adam: lr, epsilon, clipnorm must be positive and betas in (0,1)"));
        }
        Ok(())
    }
}

/// Moment accumulators mirroring the trainable tensors, plus hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<R = f32> {
    pub m: Vec<Tensor<R>>,
    pub v: Vec<Tensor<R>>,
    pub step: u64,
    pub config: AdamConfig,
}

impl<R: Real> AdamState<R> {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor<R>>, config: AdamConfig) -> Result<Self> {
        config.validate()?;
        let m: Vec<Tensor<R>> = params
            .into_iter()
            .map(|p| Tensor::zeros(p.shape()))
            .collect::<Result<_>>()?;
        Ok(AdamState {
            v: m.clone(),
            m,
            step: 0,
            config,
        })
    }

    pub fn lr(&self) -> f64 {
        self.config.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }
}

/// Rescales every gradient by `clipnorm / ‖g‖` when the joint norm exceeds
/// `clipnorm`. Returns the norm measured before clipping.
pub fn clip_by_global_norm<R: Real>(grads: &mut [Tensor<R>], clipnorm: f64) -> f64 {
    let refs: Vec<&Tensor<R>> = grads.iter().collect();
    let norm = global_norm(&refs);
    if norm > clipnorm {
        let scale = clipnorm / norm;
        for g in grads.iter_mut() {
            for v in g.data_mut() {
                *v = R::of_f64(v.as_f64() * scale);
            }
        }
    }
    norm
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step<R: Real>(params: &mut [&mut Tensor<R>], grads: &[Tensor<R>], state: &mut AdamState<R>) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::invalid("adam_step: params, grads and state differ in length"));
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.m) {
        g.expect_shape("adam_step grad", p.shape())?;
        m.expect_shape("adam_step state", p.shape())?;
    }
    state.step += 1;
    let AdamConfig {
        lr,
        beta1,
        beta2,
        epsilon,
        ..
    } = state.config;
    let t = state.step as i32;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);
    let (b1, b2) = (R::of_f64(beta1), R::of_f64(beta2));
    let (nb1, nb2) = (R::of_f64(1.0 - beta1), R::of_f64(1.0 - beta2));
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        let it = p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut());
        for (((pv, &gv), mv), vv) in it {
            *mv = b1 * *mv + nb1 * gv;
            *vv = b2 * *vv + nb2 * gv * gv;
            let m_hat = mv.as_f64() / bc1;
            let v_hat = vv.as_f64() / bc2;
            *pv = R::of_f64(pv.as_f64() - lr * m_hat / (Float::sqrt(v_hat) + epsilon));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn zero_gradient_is_identity() {
        let mut p = Tensor::<f64>::from_vec(&[3], vec![1.0, -2.0, 0.5]).unwrap();
        let before = p.clone();
        let mut st = AdamState::new([&p], AdamConfig::default()).unwrap();
        let g = vec![Tensor::zeros(&[3]).unwrap()];
        adam_step(&mut [&mut p], &g, &mut st).unwrap();
        assert_eq!(p, before);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = Tensor::<f64>::zeros(&[1]).unwrap();
        let cfg = AdamConfig { lr: 1e-3, ..AdamConfig::default() };
        let mut st = AdamState::new([&p], cfg).unwrap();
        adam_step(&mut [&mut p], &[Tensor::full(&[1], 1.0).unwrap()], &mut st).unwrap();
        // m̂ = 1, v̂ = 1 → Δ = lr / (1 + ε)
        assert!((p.data()[0] + 1e-3 / (1.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn clip_examples() {
        let mut g = vec![
            Tensor::<f64>::from_vec(&[1], vec![3.0]).unwrap(),
            Tensor::from_vec(&[1], vec![4.0]).unwrap(),
        ];
        assert_eq!(clip_by_global_norm(&mut g, 1.0), 5.0);
        assert!((g[0].data()[0] - 0.6).abs() < 1e-15);
        assert!((g[1].data()[0] - 0.8).abs() < 1e-15);
        let mut small = vec![Tensor::<f64>::from_vec(&[2], vec![0.3, 0.4]).unwrap()];
        let before = small.clone();
        clip_by_global_norm(&mut small, 1.0);
        assert_eq!(small, before);
    }

    #[test]
    fn mismatched_lengths_rejected() {
        let mut p = Tensor::<f64>::zeros(&[2]).unwrap();
        let mut st = AdamState::new([&p], AdamConfig::default()).unwrap();
        assert!(adam_step(&mut [&mut p], &[], &mut st).is_err());
        assert!(adam_step(&mut [&mut p], &[Tensor::zeros(&[3]).unwrap()], &mut st).is_err());
    }
}
