use alloc::vec::Vec;

use super::cube::DatasetCube;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Corner-aligned source coordinate of each of `dst` output samples. A single
/// output sample sits at the centre of the source extent.
fn source_coords(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    (0..dst)
        .map(|i| {
            let pos = if dst == 1 {
                (src - 1) as f64 / 2.0
            } else {
                i as f64 * (src - 1) as f64 / (dst - 1) as f64
            };
            let lo = (pos as usize).min(src - 1);
            let hi = (lo + 1).min(src - 1);
            (lo, hi, pos - lo as f64)
        })
        .collect()
}

/// Bilinear reduction of every frame and feature to `target_h × target_w`.
pub fn downsample_bilinear(cube: &DatasetCube, target_h: usize, target_w: usize) -> Result<DatasetCube> {
    let [t, h, w, c] = cube.dims();
    if target_h == 0 || target_w == 0 || target_h > h || target_w > w {
        return Err(Error::invalid(alloc::format!(
            "cannot downsample {h}x{w} to {target_h}x{target_w}"
        )));
    }
    cube.values.ensure_finite("downsample_bilinear (impute first)")?;
    if (target_h, target_w) == (h, w) {
        return Ok(cube.clone());
    }
    let ys = source_coords(h, target_h);
    let xs = source_coords(w, target_w);
    let src = cube.values.data();
    let at = |f: usize, y: usize, x: usize, j: usize| src[((f * h + y) * w + x) * c + j] as f64;
    let mut out = Vec::with_capacity(t * target_h * target_w * c);
    for f in 0..t {
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                for j in 0..c {
                    let top = at(f, y0, x0, j) * (1.0 - fx) + at(f, y0, x1, j) * fx;
                    let bottom = at(f, y1, x0, j) * (1.0 - fx) + at(f, y1, x1, j) * fx;
                    out.push((top * (1.0 - fy) + bottom * fy) as f32);
                }
            }
        }
    }
    Ok(DatasetCube {
        values: Tensor::from_vec(&[t, target_h, target_w, c], out)?,
        ..cube.clone()
    })
}
