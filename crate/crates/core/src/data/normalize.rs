use alloc::vec::Vec;

use super::cube::DatasetCube;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Per-feature min-max scaling parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub min: Vec<f32>,
    pub max: Vec<f32>,
}

impl NormStats {
    /// Min and max of every feature (last axis) of `values`.
    pub fn fit(values: &Tensor<f32>) -> Result<Self> {
        values.ensure_finite("normalize (impute first)")?;
        let c = values.channels();
        let mut min = alloc::vec![f32::INFINITY; c];
        let mut max = alloc::vec![f32::NEG_INFINITY; c];
        for px in values.data().chunks_exact(c) {
            for j in 0..c {
                min[j] = min[j].min(px[j]);
                max[j] = max[j].max(px[j]);
            }
        }
        Ok(NormStats { min, max })
    }

    pub fn features(&self) -> usize {
        self.min.len()
    }

    /// Features whose min equals max; these map to zero.
    pub fn degenerate(&self) -> Vec<bool> {
        self.min.iter().zip(&self.max).map(|(a, b)| a == b).collect()
    }

    fn check(&self, values: &Tensor<f32>) -> Result<()> {
        if values.channels() != self.features() {
            return Err(Error::invalid(alloc::format!(
                "normalization stats cover {} features, data has {}",
                self.features(),
                values.channels()
            )));
        }
        values.ensure_finite("normalize (impute first)")
    }

    /// `(x − min)/(max − min)`, clamped to `[0, 1]` for values outside the
    /// fitted range.
    pub fn apply(&self, values: &Tensor<f32>) -> Result<Tensor<f32>> {
        self.check(values)?;
        let c = self.features();
        let mut out = values.clone();
        for px in out.data_mut().chunks_exact_mut(c) {
            for j in 0..c {
                let (lo, hi) = (self.min[j] as f64, self.max[j] as f64);
                px[j] = if hi > lo {
                    ((px[j] as f64 - lo) / (hi - lo)).clamp(0.0, 1.0) as f32
                } else {
                    0.0
                };
            }
        }
        Ok(out)
    }

    /// `x'·(max − min) + min`.
    pub fn inverse(&self, values: &Tensor<f32>) -> Result<Tensor<f32>> {
        self.check(values)?;
        let c = self.features();
        let mut out = values.clone();
        for px in out.data_mut().chunks_exact_mut(c) {
            for j in 0..c {
                let (lo, hi) = (self.min[j] as f64, self.max[j] as f64);
                px[j] = (px[j] as f64 * (hi - lo) + lo) as f32;
            }
        }
        Ok(out)
    }
}

/// Scales every feature into `[0, 1]` using min/max over the frames whose
/// date lies in `fit_range` (inclusive day numbers; `None` uses all frames).
pub fn normalize(cube: &DatasetCube, fit_range: Option<(i64, i64)>) -> Result<(DatasetCube, NormStats)> {
    let frames: Vec<usize> = (0..cube.frames())
        .filter(|&i| fit_range.map_or(true, |(a, b)| (a..=b).contains(&cube.time_axis[i])))
        .collect();
    if frames.is_empty() {
        return Err(Error::Empty("normalization fit range"));
    }
    let parts: Vec<Tensor<f32>> = frames.iter().map(|&i| cube.values.outer(i)).collect::<Result<_>>()?;
    let stats = NormStats::fit(&Tensor::stack(&parts)?)?;
    Ok((cube.with_values(stats.apply(&cube.values)?)?, stats))
}
