use alloc::vec::Vec;

use super::cube::DatasetCube;
use crate::error::{Error, Result};

/// Fills one time series in place. Gaps between observations are linearly
/// interpolated, leading and trailing gaps copy the nearest observation, and
/// a series with no observations takes `fallback`.
pub(crate) fn fill_series(series: &mut [f64], fallback: f64) {
    let valid: Vec<usize> = (0..series.len()).filter(|&i| !series[i].is_nan()).collect();
    let (Some(&first), Some(&last)) = (valid.first(), valid.last()) else {
        series.iter_mut().for_each(|v| *v = fallback);
        return;
    };
    let (head, tail) = (series[first], series[last]);
    series[..first].iter_mut().for_each(|v| *v = head);
    series[last + 1..].iter_mut().for_each(|v| *v = tail);
    for pair in valid.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let (va, vb) = (series[a], series[b]);
        for t in a + 1..b {
            series[t] = va + (vb - va) * (t - a) as f64 / (b - a) as f64;
        }
    }
}

/// Temporal linear-interpolation imputation of every (pixel, feature) series.
pub fn impute(cube: &DatasetCube) -> Result<DatasetCube> {
    let [t, h, w, c] = cube.dims();
    let data = cube.values.data();
    let stride = h * w * c;

    let mut sums = alloc::vec![0.0f64; c];
    let mut counts = alloc::vec![0usize; c];
    for (i, v) in data.iter().enumerate() {
        if !v.is_nan() {
            sums[i % c] += *v as f64;
            counts[i % c] += 1;
        }
    }
    if let Some(f) = counts.iter().position(|&n| n == 0) {
        return Err(Error::AllMissing(cube.feature_names[f].clone()));
    }
    let means: Vec<f64> = sums.iter().zip(&counts).map(|(s, &n)| s / n as f64).collect();

    let mut out = cube.values.clone();
    let dst = out.data_mut();
    let mut series = alloc::vec![0.0f64; t];
    for offset in 0..stride {
        if (0..t).all(|k| !data[k * stride + offset].is_nan()) {
            continue;
        }
        for (k, s) in series.iter_mut().enumerate() {
            *s = data[k * stride + offset] as f64;
        }
        fill_series(&mut series, means[offset % c]);
        for (k, s) in series.iter().enumerate() {
            dst[k * stride + offset] = *s as f32;
        }
    }
    cube.with_values(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn midpoint_and_edges() {
        let mut s = vec![1.0, f64::NAN, 3.0];
        fill_series(&mut s, 0.0);
        assert_eq!(s, [1.0, 2.0, 3.0]);
        let mut s = vec![f64::NAN, 5.0, f64::NAN];
        fill_series(&mut s, 0.0);
        assert_eq!(s, [5.0, 5.0, 5.0]);
        let mut s = vec![f64::NAN; 3];
        fill_series(&mut s, 7.5);
        assert_eq!(s, [7.5; 3]);
    }
}
