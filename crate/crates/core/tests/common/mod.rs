#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smogcast_core::Tensor;

pub const FD_STEP: f64 = 1e-4;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random(shape: &[usize], lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::from_vec(shape, data).unwrap()
}

/// Central differences of `f` with respect to every entry of `x`.
pub fn numeric_grad(x: &Tensor<f64>, mut f: impl FnMut(&Tensor<f64>) -> f64) -> Tensor<f64> {
    let mut probe = x.clone();
    let mut g = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let v = x.data()[i];
        probe.data_mut()[i] = v + FD_STEP;
        let up = f(&probe);
        probe.data_mut()[i] = v - FD_STEP;
        let down = f(&probe);
        probe.data_mut()[i] = v;
        g.push((up - down) / (2.0 * FD_STEP));
    }
    Tensor::from_vec(x.shape(), g).unwrap()
}

/// `max|a − n| / max|n|` over one tensor.
pub fn rel_err(analytic: &Tensor<f64>, numeric: &Tensor<f64>) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape());
    let scale = numeric.data().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-10);
    let diff = analytic
        .data()
        .iter()
        .zip(numeric.data())
        .fold(0.0f64, |m, (a, n)| m.max((a - n).abs()));
    diff / scale
}

/// `Σ r·y`, the scalar loss used to pull a random cotangent through an op.
pub fn project(y: &Tensor<f64>, r: &Tensor<f64>) -> f64 {
    y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
}

pub fn assert_close(a: f64, b: f64, rel: f64) {
    let scale = a.abs().max(b.abs()).max(1e-300);
    assert!((a - b).abs() / scale <= rel, "{a} vs {b} (rel tol {rel})");
}
