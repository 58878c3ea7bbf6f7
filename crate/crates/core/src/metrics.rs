//! Binary cross-entropy, mean squared error and structural similarity.
//!
//! All reductions accumulate in `f64` regardless of the tensor element type.

use alloc::vec::Vec;

use num_traits::Float;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::Tensor;

/// Predictions are clamped into `[BCE_CLAMP, 1 − BCE_CLAMP]` before taking logs.
pub const BCE_CLAMP: f64 = 1e-7;

/// Mean binary cross-entropy of predictions `y_hat` against targets `y` in `[0, 1]`.
pub fn bce<R: Real>(y: &Tensor<R>, y_hat: &Tensor<R>) -> Result<f64> {
    y_hat.expect_shape("bce", y.shape())?;
    let mut sum = 0.0;
    for (&t, &p) in y.data().iter().zip(y_hat.data()) {
        let t = t.as_f64();
        let p = p.as_f64().clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
        sum += t * p.ln() + (1.0 - t) * (1.0 - p).ln();
    }
    Ok(-sum / y.len() as f64)
}

pub fn mse<R: Real>(y: &Tensor<R>, y_hat: &Tensor<R>) -> Result<f64> {
    y_hat.expect_shape("mse", y.shape())?;
    let sum: f64 = y
        .data()
        .iter()
        .zip(y_hat.data())
        .map(|(&a, &b)| {
            let d = a.as_f64() - b.as_f64();
            d * d
        })
        .sum();
    Ok(sum / y.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SsimWindow {
    /// One application of the formula with whole-image statistics.
    Global,
    /// Mean of the SSIM map over every fully contained Gaussian window.
    Gaussian { size: usize, sigma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimConfig {
    pub c1: f64,
    pub c2: f64,
    pub window: SsimWindow,
}

impl SsimConfig {
    /// Stabilizers `(0.01·L)²` and `(0.03·L)²` for dynamic range `L`.
    pub fn with_range(dynamic_range: f64, window: SsimWindow) -> Self {
        SsimConfig {
            c1: (0.01 * dynamic_range).powi(2),
            c2: (0.03 * dynamic_range).powi(2),
            window,
        }
    }

    pub fn gaussian() -> Self {
        Self::with_range(1.0, SsimWindow::Gaussian { size: 11, sigma: 1.5 })
    }
}

impl Default for SsimConfig {
    fn default() -> Self {
        Self::with_range(1.0, SsimWindow::Global)
    }
}

fn image_dims<R: Real>(t: &Tensor<R>) -> Result<(usize, usize)> {
    match *t.shape() {
        [h, w] | [h, w, 1] => Ok((h, w)),
        ref s => Err(Error::invalid(alloc::format!("ssim expects an [H,W] image, got {s:?}"))),
    }
}

fn formula(mx: f64, my: f64, vx: f64, vy: f64, cxy: f64, c1: f64, c2: f64) -> f64 {
    ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
}

/// Weighted moments of two samples. Weights must sum to one.
fn moments(x: impl Iterator<Item = (f64, f64, f64)> + Clone) -> (f64, f64, f64, f64, f64) {
    let (mut mx, mut my) = (0.0, 0.0);
    for (w, a, b) in x.clone() {
        mx += w * a;
        my += w * b;
    }
    let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
    for (w, a, b) in x {
        let (da, db) = (a - mx, b - my);
        vx += w * (da * da);
        vy += w * (db * db);
        cxy += w * (da * db);
    }
    (mx, my, vx, vy, cxy)
}

pub fn ssim<R: Real>(x: &Tensor<R>, y: &Tensor<R>, cfg: &SsimConfig) -> Result<f64> {
    let (h, w) = image_dims(x)?;
    y.expect_shape("ssim", x.shape())?;
    if !x.all_finite() || !y.all_finite() {
        return Err(Error::NonFinite("ssim input"));
    }
    let (xs, ys) = (x.data(), y.data());
    match cfg.window {
        SsimWindow::Global => {
            let wt = 1.0 / (h * w) as f64;
            let it = xs.iter().zip(ys).map(|(a, b)| (wt, a.as_f64(), b.as_f64()));
            let (mx, my, vx, vy, cxy) = moments(it);
            Ok(formula(mx, my, vx, vy, cxy, cfg.c1, cfg.c2))
        }
        SsimWindow::Gaussian { size, sigma } => {
            if size == 0 || size > h || size > w {
                return Err(Error::invalid(alloc::format!(
                    "gaussian window {size} does not fit a {h}x{w} image"
                )));
            }
            let kernel = gaussian_kernel(size, sigma);
            let mut total = 0.0;
            let mut count = 0usize;
            for y0 in 0..=h - size {
                for x0 in 0..=w - size {
                    let it = (0..size * size).map(|k| {
                        let (dy, dx) = (k / size, k % size);
                        let idx = (y0 + dy) * w + x0 + dx;
                        (kernel[k], xs[idx].as_f64(), ys[idx].as_f64())
                    });
                    let (mx, my, vx, vy, cxy) = moments(it);
                    total += formula(mx, my, vx, vy, cxy, cfg.c1, cfg.c2);
                    count += 1;
                }
            }
            Ok(total / count as f64)
        }
    }
}

/// Normalized 2-D Gaussian weights, row-major `size × size`.
fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let one_d: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - c;
            Float::exp(-d * d / (2.0 * sigma * sigma))
        })
        .collect();
    let mut k: Vec<f64> = one_d.iter().flat_map(|a| one_d.iter().map(move |b| a * b)).collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Per-timestep SSIM and its mean.
#[derive(Debug, Clone, PartialEq)]
pub struct SsimSeries {
    pub values: Vec<(usize, f64)>,
    pub mean: f64,
}

/// SSIM of every frame of two `[T,H,W]` (or `[T,H,W,1]`) stacks.
pub fn ssim_series<R: Real>(pred: &Tensor<R>, truth: &Tensor<R>, cfg: &SsimConfig) -> Result<SsimSeries> {
    truth.expect_shape("ssim_series", pred.shape())?;
    if !matches!(pred.rank(), 3 | 4) || (pred.rank() == 4 && pred.channels() != 1) {
        return Err(Error::invalid("ssim_series expects [T,H,W] frames"));
    }
    let t = pred.shape()[0];
    let mut values = Vec::with_capacity(t);
    for i in 0..t {
        values.push((i, ssim(&pred.outer(i)?, &truth.outer(i)?, cfg)?));
    }
    let mean = values.iter().map(|v| v.1).sum::<f64>() / t as f64;
    Ok(SsimSeries { values, mean })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn bce_half_is_ln2() {
        let y = Tensor::<f64>::from_vec(&[1], vec![1.0]).unwrap();
        let p = Tensor::from_vec(&[1], vec![0.5]).unwrap();
        assert!((bce(&y, &p).unwrap() - core::f64::consts::LN_2).abs() < 1e-12);
        let y = Tensor::<f64>::full(&[3], 0.5).unwrap();
        assert!((bce(&y, &y).unwrap() - core::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn bce_clamps_saturated_predictions() {
        let y = Tensor::<f32>::from_vec(&[2], vec![1.0, 0.0]).unwrap();
        let p = Tensor::from_vec(&[2], vec![0.0, 1.0]).unwrap();
        let v = bce(&y, &p).unwrap();
        assert!(v.is_finite());
        assert!((v + (1e-7f64).ln()).abs() < 1e-6);
    }

    #[test]
    fn mse_basics() {
        let a = Tensor::<f64>::zeros(&[2]).unwrap();
        let b = Tensor::full(&[2], 1.0).unwrap();
        assert_eq!(mse(&a, &b).unwrap(), 1.0);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        assert!(mse(&a, &Tensor::zeros(&[3]).unwrap()).is_err());
    }

    #[test]
    fn ssim_degenerate_and_identity() {
        let z = Tensor::<f64>::zeros(&[4, 4]).unwrap();
        assert_eq!(ssim(&z, &z, &SsimConfig::default()).unwrap(), 1.0);
        let x = Tensor::<f64>::from_vec(&[2, 3], vec![0.1, 0.9, 0.4, 0.3, 0.7, 0.2]).unwrap();
        assert_eq!(ssim(&x, &x, &SsimConfig::default()).unwrap(), 1.0);
    }

    #[test]
    fn gaussian_window_behaviour() {
        let data: Vec<f64> = (0..256).map(|i| ((i * 7919) % 101) as f64 / 100.0).collect();
        let x = Tensor::<f64>::from_vec(&[16, 16], data).unwrap();
        let y = x.map(|v| 1.0 - v);
        let cfg = SsimConfig::gaussian();
        assert!((ssim(&x, &x, &cfg).unwrap() - 1.0).abs() < 1e-12);
        let v = ssim(&x, &y, &cfg).unwrap();
        assert!((-1.0..1.0).contains(&v));
        let small = Tensor::<f64>::zeros(&[8, 8]).unwrap();
        assert!(ssim(&small, &small, &cfg).is_err());
    }

    #[test]
    fn series_of_identical_stacks() {
        let x = Tensor::<f32>::from_vec(&[3, 2, 2], (0..12).map(|i| i as f32 / 12.0).collect()).unwrap();
        let s = ssim_series(&x, &x, &SsimConfig::default()).unwrap();
        assert_eq!(s.values.len(), 3);
        assert!(s.values.iter().all(|&(_, v)| v == 1.0));
        assert_eq!(s.mean, 1.0);
    }
}
