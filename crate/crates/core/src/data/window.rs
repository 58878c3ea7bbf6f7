use alloc::vec::Vec;

use super::cube::DatasetCube;
use super::normalize::NormStats;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Predictor windows `[N, T_in, H, W, C]` with per-timestep aligned targets
/// `[N, T_in, H, W, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    pub samples: Tensor<f32>,
    pub targets: Tensor<f32>,
    /// Date of the target frame at each window's final timestep.
    pub sample_dates: Vec<i64>,
    pub predictor_stats: Option<NormStats>,
    pub target_stats: Option<NormStats>,
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.sample_dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_dates.is_empty()
    }

    pub fn timesteps(&self) -> usize {
        self.samples.shape()[1]
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.samples.shape()[2], self.samples.shape()[3])
    }

    /// Gathers the listed windows into one batch.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor<f32>, Tensor<f32>)> {
        if indices.iter().any(|&i| i >= self.len()) {
            return Err(Error::invalid("batch index out of range"));
        }
        Ok((gather(&self.samples, indices)?, gather(&self.targets, indices)?))
    }

    /// Subset of windows in the given order, keeping the stats.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Empty("window selection"));
        }
        let (samples, targets) = self.batch(indices)?;
        Ok(WindowedDataset {
            samples,
            targets,
            sample_dates: indices.iter().map(|&i| self.sample_dates[i]).collect(),
            predictor_stats: self.predictor_stats.clone(),
            target_stats: self.target_stats.clone(),
        })
    }

    /// Applies the given scaling to samples and targets.
    pub fn normalized(&self, predictor: &NormStats, target: &NormStats) -> Result<Self> {
        Ok(WindowedDataset {
            samples: predictor.apply(&self.samples)?,
            targets: target.apply(&self.targets)?,
            sample_dates: self.sample_dates.clone(),
            predictor_stats: Some(predictor.clone()),
            target_stats: Some(target.clone()),
        })
    }

    /// Target frame at the last timestep of every window, `[N, H, W]`.
    pub fn final_targets(&self) -> Result<Tensor<f32>> {
        last_step(&self.targets)
    }
}

pub(crate) fn gather(t: &Tensor<f32>, indices: &[usize]) -> Result<Tensor<f32>> {
    let parts: Vec<Tensor<f32>> = indices.iter().map(|&i| t.outer(i)).collect::<Result<_>>()?;
    Tensor::stack(&parts)
}

/// `[N, T, H, W, 1]` → `[N, H, W]` keeping only the final timestep.
pub fn last_step(t: &Tensor<f32>) -> Result<Tensor<f32>> {
    let [n, steps, h, w, c] = match *t.shape() {
        [n, s, h, w, c] => [n, s, h, w, c],
        ref s => return Err(Error::invalid(alloc::format!("expected [N,T,H,W,C], got {s:?}"))),
    };
    if c != 1 {
        return Err(Error::invalid("last_step expects a single channel"));
    }
    let frame = h * w;
    let mut out = Vec::with_capacity(n * frame);
    for i in 0..n {
        out.extend_from_slice(&t.outer_slice(i)[(steps - 1) * frame..]);
    }
    Tensor::from_vec(&[n, h, w], out)
}

fn frame_stack(cube: &DatasetCube, start: usize, len: usize) -> Result<Tensor<f32>> {
    let parts: Vec<Tensor<f32>> = (start..start + len).map(|k| cube.values.outer(k)).collect::<Result<_>>()?;
    Tensor::stack(&parts)
}

/// Window `i` holds predictor frames `i … i+t_in−1`; its target at step `j`
/// is the target frame `i+j+lag`.
pub fn make_windows(predictors: &DatasetCube, target: &DatasetCube, t_in: usize, lag: usize) -> Result<WindowedDataset> {
    if t_in == 0 {
        return Err(Error::invalid("t_in must be at least 1"));
    }
    if predictors.time_axis != target.time_axis {
        return Err(Error::invalid("predictor and target time axes differ"));
    }
    let [t, h, w, _] = predictors.dims();
    let [_, th, tw, tc] = target.dims();
    if (th, tw, tc) != (h, w, 1) {
        return Err(Error::shape("target cube", &[t, h, w, 1], target.values.shape()));
    }
    let needed = t_in + lag;
    if t < needed {
        return Err(Error::InsufficientFrames { needed, have: t });
    }
    let n = t - t_in + 1 - lag;
    let mut samples = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    let mut dates = Vec::with_capacity(n);
    for i in 0..n {
        samples.push(frame_stack(predictors, i, t_in)?);
        targets.push(frame_stack(target, i + lag, t_in)?);
        dates.push(target.time_axis[i + t_in - 1 + lag]);
    }
    Ok(WindowedDataset {
        samples: Tensor::stack(&samples)?,
        targets: Tensor::stack(&targets)?,
        sample_dates: dates,
        predictor_stats: None,
        target_stats: None,
    })
}

/// Every predictor window without targets, for inference. Returns the
/// windows and the date each forecast is valid for (the last input frame
/// advanced by `lag` cadence steps).
pub fn predictor_windows(predictors: &DatasetCube, t_in: usize, lag: usize) -> Result<(Tensor<f32>, Vec<i64>)> {
    if t_in == 0 {
        return Err(Error::invalid("t_in must be at least 1"));
    }
    let t = predictors.frames();
    if t < t_in {
        return Err(Error::InsufficientFrames { needed: t_in, have: t });
    }
    let step = predictors.cadence().unwrap_or(0);
    let n = t - t_in + 1;
    let mut samples = Vec::with_capacity(n);
    let mut dates = Vec::with_capacity(n);
    for i in 0..n {
        samples.push(frame_stack(predictors, i, t_in)?);
        dates.push(predictors.time_axis[i + t_in - 1] + lag as i64 * step);
    }
    Ok((Tensor::stack(&samples)?, dates))
}
