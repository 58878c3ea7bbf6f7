//! Gaussian blobs advected across a periodic grid.
//!
//! The latent field `L_t` is a sum of Gaussian blobs whose centres move by
//! a fixed velocity each frame. The target cube holds `L_t` itself; the six
//! predictor features are fixed lagged and scaled transforms of it plus
//! seeded noise, so the next target frame is recoverable from the current
//! predictor frame.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::cube::{days_from_ymd, DatasetCube, STUDY_BBOX};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const PREDICTOR_NAMES: [&str; 6] = ["SO2", "NO2", "CH4", "O3", "CO", "HCHO"];
pub const PREDICTOR_UNITS: [&str; 6] = ["mol/m2", "mol/m2", "ppb", "mol/m2", "mol/m2", "mol/m2"];
pub const TARGET_NAME: &str = "AER_AI";

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub grid_h: usize,
    pub grid_w: usize,
    pub frames: usize,
    pub n_blobs: usize,
    /// Blob displacement per frame in grid cells, `(dy, dx)`.
    pub velocity: (f64, f64),
    pub noise_sigma: f64,
    /// Range the blob widths (standard deviation, in cells) are drawn from.
    pub blob_sigma: (f64, f64),
    pub seed: u64,
    /// Date of the final frame, days since 1970-01-01.
    pub end_day: i64,
    pub cadence_days: i64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            grid_h: 16,
            grid_w: 16,
            frames: 200,
            n_blobs: 3,
            velocity: (1.0, 1.0),
            noise_sigma: 0.02,
            blob_sigma: (0.8, 1.5),
            seed: 42,
            end_day: days_from_ymd(2023, 12, 31).expect("valid literal date"),
            cadence_days: 5,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Blob {
    cy: f64,
    cx: f64,
    amplitude: f64,
    sigma: f64,
}

/// Signed distance on a ring of circumference `n`, in `[-n/2, n/2)`.
fn wrapped(d: f64, n: f64) -> f64 {
    let r = d - n * Float::floor(d / n);
    if r >= n / 2.0 {
        r - n
    } else {
        r
    }
}

fn latent(blobs: &[Blob], cfg: &SynthConfig, t: f64, y: usize, x: usize) -> f64 {
    let (h, w) = (cfg.grid_h as f64, cfg.grid_w as f64);
    blobs
        .iter()
        .map(|b| {
            let dy = wrapped(y as f64 - (b.cy + cfg.velocity.0 * t), h);
            let dx = wrapped(x as f64 - (b.cx + cfg.velocity.1 * t), w);
            b.amplitude * Float::exp(-(dy * dy + dx * dx) / (2.0 * b.sigma * b.sigma))
        })
        .sum()
}

/// Predictor features from the field now and one and two frames back.
fn features(now: f64, prev: f64, prev2: f64) -> [f64; 6] {
    [
        0.5 * now,
        prev,
        1850.0 + 40.0 * now,
        prev2,
        0.5 * (now + prev),
        now - 0.5 * prev,
    ]
}

/// Returns `(predictors, target)` cubes sharing one time axis.
pub fn synth_advection(cfg: &SynthConfig) -> Result<(DatasetCube, DatasetCube)> {
    if cfg.grid_h == 0 || cfg.grid_w == 0 || cfg.frames == 0 || cfg.n_blobs == 0 || cfg.cadence_days <= 0 {
        return Err(Error::invalid("synth dimensions must be positive"));
    }
    if !(cfg.blob_sigma.0 > 0.0 && cfg.blob_sigma.0 < cfg.blob_sigma.1) {
        return Err(Error::invalid("blob_sigma must be an increasing positive range"));
    }
    if !(cfg.noise_sigma >= 0.0) || !cfg.velocity.0.is_finite() || !cfg.velocity.1.is_finite() {
        return Err(Error::invalid("noise_sigma must be non-negative and velocity finite"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let blobs: Vec<Blob> = (0..cfg.n_blobs)
        .map(|_| Blob {
            cy: rng.random_range(0.0..cfg.grid_h as f64),
            cx: rng.random_range(0.0..cfg.grid_w as f64),
            amplitude: rng.random_range(0.5..1.0),
            sigma: rng.random_range(cfg.blob_sigma.0..cfg.blob_sigma.1),
        })
        .collect();
    let noise = Normal::new(0.0, cfg.noise_sigma).map_err(|_| Error::invalid("bad noise_sigma"))?;

    let (t_n, h, w) = (cfg.frames, cfg.grid_h, cfg.grid_w);
    let mut pred = Vec::with_capacity(t_n * h * w * 6);
    let mut target = Vec::with_capacity(t_n * h * w);
    for t in 0..t_n {
        let tf = t as f64;
        for y in 0..h {
            for x in 0..w {
                let now = latent(&blobs, cfg, tf, y, x);
                let prev = latent(&blobs, cfg, tf - 1.0, y, x);
                let prev2 = latent(&blobs, cfg, tf - 2.0, y, x);
                target.push(now as f32);
                for (k, v) in features(now, prev, prev2).into_iter().enumerate() {
                    let scale = if k == 2 { 40.0 } else { 1.0 };
                    let n = if cfg.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                    pred.push((v + scale * n) as f32);
                }
            }
        }
    }
    let first = cfg.end_day - cfg.cadence_days * (t_n as i64 - 1);
    let axis: Vec<i64> = (0..t_n as i64).map(|i| first + i * cfg.cadence_days).collect();
    let names = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<String>>();
    let predictors = DatasetCube::new(
        Tensor::from_vec(&[t_n, h, w, 6], pred)?,
        axis.clone(),
        names(&PREDICTOR_NAMES),
        names(&PREDICTOR_UNITS),
        STUDY_BBOX,
    )?;
    let target = DatasetCube::new(
        Tensor::from_vec(&[t_n, h, w, 1], target)?,
        axis,
        names(&[TARGET_NAME]),
        names(&["1"]),
        STUDY_BBOX,
    )?;
    Ok((predictors, target))
}
