//! Same-padded, stride-1 2-D and 3-D convolution with backward passes.
//!
//! Tensors are channels-last: images are `[H, W, C]`, volumes `[T, H, W, C]`,
//! kernels `[kh, kw, Cin, Cout]` or `[kd, kh, kw, Cin, Cout]`. Positions
//! outside the input read as zero. The 2-D case runs through the 3-D kernel
//! with a depth of one, so both share a single accumulation order:
//! for each output element, taps in `(dz, dy, dx)` order, then input
//! channels.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::Tensor;

/// Kernel geometry of a same-padded convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub kernel_d: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl ConvSpec {
    pub fn new_2d(kernel_h: usize, kernel_w: usize, in_channels: usize, out_channels: usize) -> Result<Self> {
        Self::new_3d(1, kernel_h, kernel_w, in_channels, out_channels)
    }

    pub fn new_3d(
        kernel_d: usize,
        kernel_h: usize,
        kernel_w: usize,
        in_channels: usize,
        out_channels: usize,
    ) -> Result<Self> {
        let dims = [kernel_d, kernel_h, kernel_w, in_channels, out_channels];
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidShape(dims.to_vec()));
        }
        if kernel_d % 2 == 0 || kernel_h % 2 == 0 || kernel_w % 2 == 0 {
            return Err(Error::EvenKernel(vec![kernel_d, kernel_h, kernel_w]));
        }
        Ok(ConvSpec {
            kernel_d,
            kernel_h,
            kernel_w,
            in_channels,
            out_channels,
        })
    }

    /// Reads the geometry off a `[kh,kw,Cin,Cout]` or `[kd,kh,kw,Cin,Cout]` kernel.
    pub fn from_weights<R: Real>(weights: &Tensor<R>) -> Result<Self> {
        match *weights.shape() {
            [kh, kw, ci, co] => Self::new_2d(kh, kw, ci, co),
            [kd, kh, kw, ci, co] => Self::new_3d(kd, kh, kw, ci, co),
            ref s => Err(Error::invalid(alloc::format!("kernel rank must be 4 or 5, got {s:?}"))),
        }
    }

    pub fn weight_shape_2d(&self) -> [usize; 4] {
        [self.kernel_h, self.kernel_w, self.in_channels, self.out_channels]
    }

    pub fn weight_shape_3d(&self) -> [usize; 5] {
        [self.kernel_d, self.kernel_h, self.kernel_w, self.in_channels, self.out_channels]
    }

    pub fn param_count(&self) -> usize {
        self.kernel_d * self.kernel_h * self.kernel_w * self.in_channels * self.out_channels + self.out_channels
    }

    fn taps(&self) -> usize {
        self.kernel_d * self.kernel_h * self.kernel_w
    }

    /// Kernel with spatial axes reversed and channel axes swapped; correlating
    /// the output gradient with it yields the input gradient.
    fn flipped_transposed<R: Real>(&self, w: &[R]) -> (ConvSpec, Vec<R>) {
        let (ci, co) = (self.in_channels, self.out_channels);
        let taps = self.taps();
        let mut out = vec![R::zero(); w.len()];
        for tap in 0..taps {
            let src = &w[(taps - 1 - tap) * ci * co..][..ci * co];
            let dst = &mut out[tap * ci * co..][..ci * co];
            for i in 0..ci {
                for o in 0..co {
                    dst[o * ci + i] = src[i * co + o];
                }
            }
        }
        let spec = ConvSpec {
            in_channels: co,
            out_channels: ci,
            ..*self
        };
        (spec, out)
    }
}

#[derive(Debug, Clone, Copy)]
struct Volume {
    t: usize,
    h: usize,
    w: usize,
}

impl Volume {
    fn rows(&self) -> usize {
        self.t * self.h
    }
}

/// Gradients of a convolution with respect to its three inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads<R> {
    pub input: Tensor<R>,
    pub weights: Tensor<R>,
    pub bias: Tensor<R>,
}

#[inline]
fn shifted(pos: usize, tap: usize, half: usize, extent: usize) -> Option<usize> {
    let p = pos + tap;
    if p < half || p - half >= extent {
        None
    } else {
        Some(p - half)
    }
}

/// Computes one output row `(t, y)` of a same-padded correlation.
fn correlate_row<R: Real>(
    input: &[R],
    vol: Volume,
    weights: &[R],
    spec: &ConvSpec,
    bias: Option<&[R]>,
    row: usize,
    out_row: &mut [R],
) {
    let (cin, cout) = (spec.in_channels, spec.out_channels);
    let (pd, ph, pw) = (spec.kernel_d / 2, spec.kernel_h / 2, spec.kernel_w / 2);
    let (t, y) = (row / vol.h, row % vol.h);
    match bias {
        Some(b) => out_row.chunks_exact_mut(cout).for_each(|px| px.copy_from_slice(b)),
        None => out_row.fill(R::zero()),
    }
    for x in 0..vol.w {
        let out_px = &mut out_row[x * cout..(x + 1) * cout];
        for dz in 0..spec.kernel_d {
            let Some(it) = shifted(t, dz, pd, vol.t) else { continue };
            for dy in 0..spec.kernel_h {
                let Some(iy) = shifted(y, dy, ph, vol.h) else { continue };
                for dx in 0..spec.kernel_w {
                    let Some(ix) = shifted(x, dx, pw, vol.w) else { continue };
                    let in_px = &input[((it * vol.h + iy) * vol.w + ix) * cin..][..cin];
                    let tap = (dz * spec.kernel_h + dy) * spec.kernel_w + dx;
                    let w_tap = &weights[tap * cin * cout..][..cin * cout];
                    for (ci, &v) in in_px.iter().enumerate() {
                        let w_row = &w_tap[ci * cout..][..cout];
                        for (o, &wv) in out_px.iter_mut().zip(w_row) {
                            *o = *o + v * wv;
                        }
                    }
                }
            }
        }
    }
}

fn correlate<R: Real>(input: &[R], vol: Volume, weights: &[R], spec: &ConvSpec, bias: Option<&[R]>) -> Vec<R> {
    let row_len = vol.w * spec.out_channels;
    let mut out = vec![R::zero(); vol.rows() * row_len];
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        out.par_chunks_mut(row_len)
            .enumerate()
            .for_each(|(r, o)| correlate_row(input, vol, weights, spec, bias, r, o));
    }
    #[cfg(not(feature = "parallel"))]
    for (r, o) in out.chunks_mut(row_len).enumerate() {
        correlate_row(input, vol, weights, spec, bias, r, o);
    }
    out
}

/// Accumulates the weight gradient of one kernel tap over every position.
fn weight_grad_tap<R: Real>(
    input: &[R],
    grad_out: &[R],
    vol: Volume,
    spec: &ConvSpec,
    tap: usize,
    gw_tap: &mut [R],
) {
    let (cin, cout) = (spec.in_channels, spec.out_channels);
    let (pd, ph, pw) = (spec.kernel_d / 2, spec.kernel_h / 2, spec.kernel_w / 2);
    let dx = tap % spec.kernel_w;
    let dy = (tap / spec.kernel_w) % spec.kernel_h;
    let dz = tap / (spec.kernel_w * spec.kernel_h);
    for t in 0..vol.t {
        let Some(it) = shifted(t, dz, pd, vol.t) else { continue };
        for y in 0..vol.h {
            let Some(iy) = shifted(y, dy, ph, vol.h) else { continue };
            for x in 0..vol.w {
                let Some(ix) = shifted(x, dx, pw, vol.w) else { continue };
                let in_px = &input[((it * vol.h + iy) * vol.w + ix) * cin..][..cin];
                let g_px = &grad_out[((t * vol.h + y) * vol.w + x) * cout..][..cout];
                for (ci, &v) in in_px.iter().enumerate() {
                    let dst = &mut gw_tap[ci * cout..][..cout];
                    for (d, &g) in dst.iter_mut().zip(g_px) {
                        *d = *d + v * g;
                    }
                }
            }
        }
    }
}

fn correlate_backward<R: Real>(
    input: &[R],
    vol: Volume,
    weights: &[R],
    spec: &ConvSpec,
    grad_out: &[R],
) -> (Vec<R>, Vec<R>, Vec<R>) {
    let (fspec, fweights) = spec.flipped_transposed(weights);
    let grad_in = correlate(grad_out, vol, &fweights, &fspec, None);

    let tap_len = spec.in_channels * spec.out_channels;
    let mut grad_w = vec![R::zero(); weights.len()];
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        grad_w
            .par_chunks_mut(tap_len)
            .enumerate()
            .for_each(|(tap, gw)| weight_grad_tap(input, grad_out, vol, spec, tap, gw));
    }
    #[cfg(not(feature = "parallel"))]
    for (tap, gw) in grad_w.chunks_mut(tap_len).enumerate() {
        weight_grad_tap(input, grad_out, vol, spec, tap, gw);
    }

    let mut grad_b = vec![R::zero(); spec.out_channels];
    for px in grad_out.chunks_exact(spec.out_channels) {
        for (b, &g) in grad_b.iter_mut().zip(px) {
            *b = *b + g;
        }
    }
    (grad_in, grad_w, grad_b)
}

fn check_2d<R: Real>(input: &Tensor<R>, weights: &Tensor<R>, spec: &ConvSpec) -> Result<Volume> {
    if spec.kernel_d != 1 {
        return Err(Error::invalid("conv2d requires a depth-1 spec"));
    }
    weights.expect_shape("conv2d weights", &spec.weight_shape_2d())?;
    match *input.shape() {
        [h, w, c] if c == spec.in_channels => Ok(Volume { t: 1, h, w }),
        ref s => Err(Error::shape("conv2d input", &[0, 0, spec.in_channels], s)),
    }
}

fn check_3d<R: Real>(input: &Tensor<R>, weights: &Tensor<R>, spec: &ConvSpec) -> Result<Volume> {
    weights.expect_shape("conv3d weights", &spec.weight_shape_3d())?;
    match *input.shape() {
        [t, h, w, c] if c == spec.in_channels => Ok(Volume { t, h, w }),
        ref s => Err(Error::shape("conv3d input", &[0, 0, 0, spec.in_channels], s)),
    }
}

fn check_bias<R: Real>(bias: &Tensor<R>, spec: &ConvSpec) -> Result<()> {
    bias.expect_shape("conv bias", &[spec.out_channels])
}

/// `[H,W,Cin] ⊛ [kh,kw,Cin,Cout] + bias → [H,W,Cout]`.
pub fn conv2d_forward<R: Real>(
    input: &Tensor<R>,
    weights: &Tensor<R>,
    bias: &Tensor<R>,
    spec: &ConvSpec,
) -> Result<Tensor<R>> {
    let vol = check_2d(input, weights, spec)?;
    check_bias(bias, spec)?;
    let out = correlate(input.data(), vol, weights.data(), spec, Some(bias.data()));
    Tensor::from_vec(&[vol.h, vol.w, spec.out_channels], out)
}

pub fn conv2d_backward<R: Real>(
    input: &Tensor<R>,
    weights: &Tensor<R>,
    grad_out: &Tensor<R>,
    spec: &ConvSpec,
) -> Result<ConvGrads<R>> {
    let vol = check_2d(input, weights, spec)?;
    grad_out.expect_shape("conv2d grad_out", &[vol.h, vol.w, spec.out_channels])?;
    let (gi, gw, gb) = correlate_backward(input.data(), vol, weights.data(), spec, grad_out.data());
    Ok(ConvGrads {
        input: Tensor::from_vec(input.shape(), gi)?,
        weights: Tensor::from_vec(weights.shape(), gw)?,
        bias: Tensor::from_vec(&[spec.out_channels], gb)?,
    })
}

/// `[T,H,W,Cin] ⊛ [kd,kh,kw,Cin,Cout] + bias → [T,H,W,Cout]`.
pub fn conv3d_forward<R: Real>(
    input: &Tensor<R>,
    weights: &Tensor<R>,
    bias: &Tensor<R>,
    spec: &ConvSpec,
) -> Result<Tensor<R>> {
    let vol = check_3d(input, weights, spec)?;
    check_bias(bias, spec)?;
    let out = correlate(input.data(), vol, weights.data(), spec, Some(bias.data()));
    Tensor::from_vec(&[vol.t, vol.h, vol.w, spec.out_channels], out)
}

pub fn conv3d_backward<R: Real>(
    input: &Tensor<R>,
    weights: &Tensor<R>,
    grad_out: &Tensor<R>,
    spec: &ConvSpec,
) -> Result<ConvGrads<R>> {
    let vol = check_3d(input, weights, spec)?;
    grad_out.expect_shape("conv3d grad_out", &[vol.t, vol.h, vol.w, spec.out_channels])?;
    let (gi, gw, gb) = correlate_backward(input.data(), vol, weights.data(), spec, grad_out.data());
    Ok(ConvGrads {
        input: Tensor::from_vec(input.shape(), gi)?,
        weights: Tensor::from_vec(weights.shape(), gw)?,
        bias: Tensor::from_vec(&[spec.out_channels], gb)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_center_kernel() {
        let spec = ConvSpec::new_2d(3, 3, 1, 1).unwrap();
        let mut w = Tensor::<f64>::zeros(&[3, 3, 1, 1]).unwrap();
        w.data_mut()[4] = 1.0;
        let b = Tensor::zeros(&[1]).unwrap();
        let x = Tensor::from_vec(&[1, 1, 1], vec![5.0]).unwrap();
        assert_eq!(conv2d_forward(&x, &w, &b, &spec).unwrap().data(), &[5.0]);
    }

    #[test]
    fn all_ones_kernel_on_two_by_two() {
        let spec = ConvSpec::new_2d(3, 3, 1, 1).unwrap();
        let w = Tensor::<f64>::full(&[3, 3, 1, 1], 1.0).unwrap();
        let b = Tensor::zeros(&[1]).unwrap();
        let x = Tensor::from_vec(&[2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(conv2d_forward(&x, &w, &b, &spec).unwrap().data(), &[10.0; 4]);
    }

    #[test]
    fn even_kernel_rejected() {
        assert!(matches!(ConvSpec::new_2d(2, 3, 1, 1), Err(Error::EvenKernel(_))));
        assert!(ConvSpec::new_3d(3, 3, 4, 1, 1).is_err());
    }

    #[test]
    fn mismatched_shapes_rejected() {
        let spec = ConvSpec::new_2d(3, 3, 2, 1).unwrap();
        let w = Tensor::<f64>::zeros(&[3, 3, 2, 1]).unwrap();
        let b = Tensor::zeros(&[1]).unwrap();
        let x = Tensor::zeros(&[4, 4, 3]).unwrap();
        assert!(conv2d_forward(&x, &w, &b, &spec).is_err());
        let x = Tensor::zeros(&[4, 4, 2]).unwrap();
        let g = Tensor::zeros(&[4, 4, 2]).unwrap();
        assert!(conv2d_backward(&x, &w, &g, &spec).is_err());
    }

    #[test]
    fn scalar_backward_is_chain_rule() {
        let spec = ConvSpec::new_2d(1, 1, 1, 1).unwrap();
        let x = Tensor::<f64>::from_vec(&[1, 1, 1], vec![1.5]).unwrap();
        let w = Tensor::from_vec(&[1, 1, 1, 1], vec![-0.75]).unwrap();
        let g = Tensor::from_vec(&[1, 1, 1], vec![2.0]).unwrap();
        let grads = conv2d_backward(&x, &w, &g, &spec).unwrap();
        assert_eq!(grads.weights.data(), &[3.0]);
        assert_eq!(grads.input.data(), &[-1.5]);
        assert_eq!(grads.bias.data(), &[2.0]);
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let spec = ConvSpec::new_2d(3, 3, 2, 3).unwrap();
        let x = Tensor::<f64>::full(&[4, 4, 2], 0.5).unwrap();
        let w = Tensor::full(&[3, 3, 2, 3], 0.1).unwrap();
        let g = Tensor::zeros(&[4, 4, 3]).unwrap();
        let grads = conv2d_backward(&x, &w, &g, &spec).unwrap();
        assert!(grads.input.data().iter().all(|&v| v == 0.0));
        assert!(grads.weights.data().iter().all(|&v| v == 0.0));
        assert!(grads.bias.data().iter().all(|&v| v == 0.0));
    }
}
