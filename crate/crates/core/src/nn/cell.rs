//! Convolutional LSTM cell and layer with backpropagation through time.
//!
//! Gate kernels are stored packed along the output-channel axis in the order
//! input, forget, candidate, output: `kernel` is `[k,k,Cin,4F]`,
//! `recurrent_kernel` is `[k,k,F,4F]` and `bias` is `[4F]`. One step is
//!
//! ```text
//! i  = σ(W_xi∗x + W_hi∗h₋ + b_i)
//! f  = σ(W_xf∗x + W_hf∗h₋ + b_f)
//! c̃  = tanh(W_xc∗x + W_hc∗h₋ + b_c)
//! c  = f⊙c₋ + i⊙c̃
//! o  = σ(W_xo∗x + W_ho∗h₋ + b_o)
//! h  = o⊙tanh(c)
//! ```
//!
//! The input and recurrent convolutions are evaluated as one convolution over
//! the channel-concatenation `[x, h₋]`.

use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use rand::Rng;

use crate::conv::{conv2d_backward, conv2d_forward, ConvSpec};
use crate::error::{Error, Result};
use crate::ops::sigmoid_scalar;
use crate::scalar::Real;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Input = 0,
    Forget = 1,
    Candidate = 2,
    Output = 3,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Input, Gate::Forget, Gate::Candidate, Gate::Output];
}

/// Learnable weights of one ConvLSTM cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLSTMCellParams<R = f32> {
    pub kernel: Tensor<R>,
    pub recurrent_kernel: Tensor<R>,
    pub bias: Tensor<R>,
}

/// The three tensors feeding one gate, unpacked from the cell weights.
#[derive(Debug, Clone, PartialEq)]
pub struct GateParams<R> {
    pub w_x: Tensor<R>,
    pub w_h: Tensor<R>,
    pub b: Tensor<R>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellState<R = f32> {
    pub h: Tensor<R>,
    pub c: Tensor<R>,
}

impl<R: Real> CellState<R> {
    pub fn zeros(height: usize, width: usize, filters: usize) -> Result<Self> {
        Ok(CellState {
            h: Tensor::zeros(&[height, width, filters])?,
            c: Tensor::zeros(&[height, width, filters])?,
        })
    }
}

fn slice_gate<R: Real>(packed: &Tensor<R>, gate: Gate, filters: usize) -> Result<Tensor<R>> {
    let rows = packed.len() / (4 * filters);
    let off = gate as usize * filters;
    let mut data = Vec::with_capacity(rows * filters);
    for r in 0..rows {
        data.extend_from_slice(&packed.data()[r * 4 * filters + off..][..filters]);
    }
    let mut shape = packed.shape().to_vec();
    *shape.last_mut().unwrap() = filters;
    Tensor::from_vec(&shape, data)
}

impl<R: Real> ConvLSTMCellParams<R> {
    pub fn zeros(kernel: usize, in_channels: usize, filters: usize) -> Result<Self> {
        ConvSpec::new_2d(kernel, kernel, in_channels, 4 * filters)?;
        Ok(ConvLSTMCellParams {
            kernel: Tensor::zeros(&[kernel, kernel, in_channels, 4 * filters])?,
            recurrent_kernel: Tensor::zeros(&[kernel, kernel, filters, 4 * filters])?,
            bias: Tensor::zeros(&[4 * filters])?,
        })
    }

    /// Uniform weights in `±1/sqrt(fan_in)`, zero biases except the forget
    /// gate, which starts at one.
    pub fn init<G: Rng>(kernel: usize, in_channels: usize, filters: usize, rng: &mut G) -> Result<Self> {
        let mut p = Self::zeros(kernel, in_channels, filters)?;
        let kx = 1.0 / Float::sqrt((kernel * kernel * in_channels) as f64);
        let kh = 1.0 / Float::sqrt((kernel * kernel * filters) as f64);
        for v in p.kernel.data_mut() {
            *v = R::of_f64(rng.random_range(-kx..kx));
        }
        for v in p.recurrent_kernel.data_mut() {
            *v = R::of_f64(rng.random_range(-kh..kh));
        }
        for v in &mut p.bias.data_mut()[filters..2 * filters] {
            *v = R::one();
        }
        Ok(p)
    }

    pub fn kernel_size(&self) -> usize {
        self.kernel.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.kernel.shape()[2]
    }

    pub fn filters(&self) -> usize {
        self.recurrent_kernel.shape()[2]
    }

    /// `4·(k²·(Cin+F)·F + F)`.
    pub fn param_count(&self) -> usize {
        self.kernel.len() + self.recurrent_kernel.len() + self.bias.len()
    }

    pub fn gate(&self, gate: Gate) -> Result<GateParams<R>> {
        let f = self.filters();
        Ok(GateParams {
            w_x: slice_gate(&self.kernel, gate, f)?,
            w_h: slice_gate(&self.recurrent_kernel, gate, f)?,
            b: slice_gate(&self.bias, gate, f)?,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.kernel_size();
        let (cin, f) = (self.in_channels(), self.filters());
        self.kernel.expect_shape("cell kernel", &[k, k, cin, 4 * f])?;
        self.recurrent_kernel.expect_shape("cell recurrent kernel", &[k, k, f, 4 * f])?;
        self.bias.expect_shape("cell bias", &[4 * f])?;
        ConvSpec::new_2d(k, k, cin, 4 * f).map(|_| ())
    }

    fn pack(&self) -> Result<PackedCell<R>> {
        self.validate()?;
        let k = self.kernel_size();
        let (cin, f) = (self.in_channels(), self.filters());
        let taps = k * k;
        let mut w = Vec::with_capacity(taps * (cin + f) * 4 * f);
        for tap in 0..taps {
            w.extend_from_slice(&self.kernel.data()[tap * cin * 4 * f..][..cin * 4 * f]);
            w.extend_from_slice(&self.recurrent_kernel.data()[tap * f * 4 * f..][..f * 4 * f]);
        }
        Ok(PackedCell {
            spec: ConvSpec::new_2d(k, k, cin + f, 4 * f)?,
            weights: Tensor::from_vec(&[k, k, cin + f, 4 * f], w)?,
            bias: self.bias.clone(),
            in_channels: cin,
            filters: f,
        })
    }

    fn unpack_grads(&self, packed: &Tensor<R>, bias: Tensor<R>) -> Result<Self> {
        let k = self.kernel_size();
        let (cin, f) = (self.in_channels(), self.filters());
        let mut kx = Vec::with_capacity(self.kernel.len());
        let mut kh = Vec::with_capacity(self.recurrent_kernel.len());
        for tap in packed.data().chunks_exact((cin + f) * 4 * f) {
            kx.extend_from_slice(&tap[..cin * 4 * f]);
            kh.extend_from_slice(&tap[cin * 4 * f..]);
        }
        Ok(ConvLSTMCellParams {
            kernel: Tensor::from_vec(&[k, k, cin, 4 * f], kx)?,
            recurrent_kernel: Tensor::from_vec(&[k, k, f, 4 * f], kh)?,
            bias,
        })
    }
}

struct PackedCell<R> {
    spec: ConvSpec,
    weights: Tensor<R>,
    bias: Tensor<R>,
    in_channels: usize,
    filters: usize,
}

/// Forward intermediates of one cell step, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct StepCache<R> {
    /// `[x, h₋]` concatenated on the channel axis.
    concat: Tensor<R>,
    /// Activated gates `[i, f, c̃, o]` per pixel, `[H,W,4F]`.
    gates: Tensor<R>,
    c_prev: Tensor<R>,
    tanh_c: Tensor<R>,
}

impl<R: Real> StepCache<R> {
    /// Activated gates `[i, f, c̃, o]` per pixel.
    pub fn gates(&self) -> &Tensor<R> {
        &self.gates
    }
}

fn concat_channels<R: Real>(x: &Tensor<R>, h: &Tensor<R>) -> Result<Tensor<R>> {
    let (cx, ch) = (x.channels(), h.channels());
    let pixels = x.len() / cx;
    let mut data = Vec::with_capacity(pixels * (cx + ch));
    for (px, hp) in x.data().chunks_exact(cx).zip(h.data().chunks_exact(ch)) {
        data.extend_from_slice(px);
        data.extend_from_slice(hp);
    }
    let s = x.shape();
    Tensor::from_vec(&[s[0], s[1], cx + ch], data)
}

fn step_packed<R: Real>(
    x: &Tensor<R>,
    prev: &CellState<R>,
    cell: &PackedCell<R>,
) -> Result<(CellState<R>, StepCache<R>)> {
    let f = cell.filters;
    let [h, w, cin] = match *x.shape() {
        [h, w, c] => [h, w, c],
        ref s => return Err(Error::shape("cell_step input", &[0, 0, cell.in_channels], s)),
    };
    if cin != cell.in_channels {
        return Err(Error::shape("cell_step input", &[h, w, cell.in_channels], x.shape()));
    }
    prev.h.expect_shape("cell_step h", &[h, w, f])?;
    prev.c.expect_shape("cell_step c", &[h, w, f])?;

    let concat = concat_channels(x, &prev.h)?;
    let mut gates = conv2d_forward(&concat, &cell.weights, &cell.bias, &cell.spec)?;
    let mut c = vec![R::zero(); h * w * f];
    let mut tanh_c = vec![R::zero(); h * w * f];
    let mut h_new = vec![R::zero(); h * w * f];
    for (p, g) in gates.data_mut().chunks_exact_mut(4 * f).enumerate() {
        for j in 0..f {
            let i_g = sigmoid_scalar(g[j]);
            let f_g = sigmoid_scalar(g[f + j]);
            let c_g = g[2 * f + j].tanh();
            let o_g = sigmoid_scalar(g[3 * f + j]);
            g[j] = i_g;
            g[f + j] = f_g;
            g[2 * f + j] = c_g;
            g[3 * f + j] = o_g;
            let k = p * f + j;
            let cv = f_g * prev.c.data()[k] + i_g * c_g;
            let tc = cv.tanh();
            c[k] = cv;
            tanh_c[k] = tc;
            h_new[k] = o_g * tc;
        }
    }
    let state = CellState {
        h: Tensor::from_vec(&[h, w, f], h_new)?,
        c: Tensor::from_vec(&[h, w, f], c)?,
    };
    if !state.c.all_finite() || !state.h.all_finite() {
        return Err(Error::NonFinite("cell_step"));
    }
    let cache = StepCache {
        concat,
        gates,
        c_prev: prev.c.clone(),
        tanh_c: Tensor::from_vec(&[h, w, f], tanh_c)?,
    };
    Ok((state, cache))
}

/// One ConvLSTM update `(x, (h₋, c₋)) → (h, c)`.
pub fn cell_step<R: Real>(x: &Tensor<R>, prev: &CellState<R>, params: &ConvLSTMCellParams<R>) -> Result<CellState<R>> {
    Ok(step_packed(x, prev, &params.pack()?)?.0)
}

/// Like [`cell_step`] but also returns the intermediates [`cell_backward`] needs.
pub fn cell_step_cached<R: Real>(
    x: &Tensor<R>,
    prev: &CellState<R>,
    params: &ConvLSTMCellParams<R>,
) -> Result<(CellState<R>, StepCache<R>)> {
    step_packed(x, prev, &params.pack()?)
}

/// Gradients flowing out of a cell step.
#[derive(Debug, Clone)]
pub struct CellGrads<R> {
    pub x: Tensor<R>,
    pub prev: CellState<R>,
    pub params: ConvLSTMCellParams<R>,
}

/// Returns `(grad_concat, grad_packed_weights, grad_bias, grad_c_prev)`.
fn backward_packed<R: Real>(
    cache: &StepCache<R>,
    cell: &PackedCell<R>,
    grad_h: &Tensor<R>,
    grad_c: &Tensor<R>,
) -> Result<(Tensor<R>, Tensor<R>, Tensor<R>, Tensor<R>)> {
    let f = cell.filters;
    grad_h.expect_shape("cell_backward grad_h", cache.tanh_c.shape())?;
    grad_c.expect_shape("cell_backward grad_c", cache.tanh_c.shape())?;
    let one = R::one();
    let mut dz = cache.gates.clone();
    let mut dc_prev = vec![R::zero(); cache.c_prev.len()];
    for (p, d) in dz.data_mut().chunks_exact_mut(4 * f).enumerate() {
        for j in 0..f {
            let k = p * f + j;
            let (i_g, f_g, c_g, o_g) = (d[j], d[f + j], d[2 * f + j], d[3 * f + j]);
            let tc = cache.tanh_c.data()[k];
            let dh = grad_h.data()[k];
            let dc = grad_c.data()[k] + dh * o_g * (one - tc * tc);
            let d_o = dh * tc;
            let d_i = dc * c_g;
            let d_f = dc * cache.c_prev.data()[k];
            let d_c = dc * i_g;
            dc_prev[k] = dc * f_g;
            d[j] = d_i * i_g * (one - i_g);
            d[f + j] = d_f * f_g * (one - f_g);
            d[2 * f + j] = d_c * (one - c_g * c_g);
            d[3 * f + j] = d_o * o_g * (one - o_g);
        }
    }
    let grads = conv2d_backward(&cache.concat, &cell.weights, &dz, &cell.spec)?;
    Ok((
        grads.input,
        grads.weights,
        grads.bias,
        Tensor::from_vec(cache.c_prev.shape(), dc_prev)?,
    ))
}

fn split_concat<R: Real>(concat: &Tensor<R>, cin: usize) -> Result<(Tensor<R>, Tensor<R>)> {
    let total = concat.channels();
    let s = concat.shape();
    let mut x = Vec::with_capacity(s[0] * s[1] * cin);
    let mut h = Vec::with_capacity(s[0] * s[1] * (total - cin));
    for px in concat.data().chunks_exact(total) {
        x.extend_from_slice(&px[..cin]);
        h.extend_from_slice(&px[cin..]);
    }
    Ok((
        Tensor::from_vec(&[s[0], s[1], cin], x)?,
        Tensor::from_vec(&[s[0], s[1], total - cin], h)?,
    ))
}

/// Reverse-mode gradients of one [`cell_step`] given upstream `∂L/∂h` and `∂L/∂c`.
pub fn cell_backward<R: Real>(
    cache: Option<&StepCache<R>>,
    params: &ConvLSTMCellParams<R>,
    grad_h: &Tensor<R>,
    grad_c: &Tensor<R>,
) -> Result<CellGrads<R>> {
    let cache = cache.ok_or(Error::MissingCache("cell_backward"))?;
    let cell = params.pack()?;
    let (g_concat, g_w, g_b, g_c_prev) = backward_packed(cache, &cell, grad_h, grad_c)?;
    let (gx, gh) = split_concat(&g_concat, cell.in_channels)?;
    Ok(CellGrads {
        x: gx,
        prev: CellState { h: gh, c: g_c_prev },
        params: params.unpack_grads(&g_w, g_b)?,
    })
}

/// Cached forward pass of a whole sequence.
#[derive(Debug, Clone)]
pub struct LayerCache<R> {
    steps: Vec<StepCache<R>>,
}

impl<R> LayerCache<R> {
    pub fn timesteps(&self) -> usize {
        self.steps.len()
    }
}

fn seq_dims<R: Real>(seq: &Tensor<R>) -> Result<[usize; 4]> {
    match *seq.shape() {
        [t, h, w, c] => Ok([t, h, w, c]),
        ref s => Err(Error::invalid(alloc::format!("sequence must be [T,H,W,C], got {s:?}"))),
    }
}

/// Runs the cell over the leading time axis from a zero state and stacks
/// every hidden state, `[T,H,W,Cin] → [T,H,W,F]`.
pub fn layer_forward_cached<R: Real>(
    seq: &Tensor<R>,
    params: &ConvLSTMCellParams<R>,
) -> Result<(Tensor<R>, LayerCache<R>)> {
    let [t, h, w, _] = seq_dims(seq)?;
    let cell = params.pack()?;
    let mut state = CellState::zeros(h, w, cell.filters)?;
    let mut out = Vec::with_capacity(t * h * w * cell.filters);
    let mut steps = Vec::with_capacity(t);
    for step in 0..t {
        let x = seq.outer(step)?;
        let (next, cache) = step_packed(&x, &state, &cell)?;
        out.extend_from_slice(next.h.data());
        steps.push(cache);
        state = next;
    }
    Ok((Tensor::from_vec(&[t, h, w, cell.filters], out)?, LayerCache { steps }))
}

/// With `return_sequences` the output keeps every timestep; otherwise only
/// the final hidden state is returned as a `[1,H,W,F]` sequence.
pub fn layer_forward<R: Real>(
    seq: &Tensor<R>,
    params: &ConvLSTMCellParams<R>,
    return_sequences: bool,
) -> Result<Tensor<R>> {
    let (out, _) = layer_forward_cached(seq, params)?;
    if return_sequences {
        Ok(out)
    } else {
        let s = out.shape().to_vec();
        let last = out.outer(s[0] - 1)?;
        last.reshape(&[1, s[1], s[2], s[3]])
    }
}

/// BPTT over a cached sequence. `grad_out` is `∂L/∂h_t` for every timestep;
/// returns `∂L/∂seq` and parameter gradients summed across timesteps.
pub fn layer_backward<R: Real>(
    cache: &LayerCache<R>,
    params: &ConvLSTMCellParams<R>,
    grad_out: &Tensor<R>,
) -> Result<(Tensor<R>, ConvLSTMCellParams<R>)> {
    let [t, h, w, f] = seq_dims(grad_out)?;
    if t != cache.steps.len() || f != params.filters() {
        return Err(Error::shape(
            "layer_backward grad_out",
            &[cache.steps.len(), h, w, params.filters()],
            grad_out.shape(),
        ));
    }
    if t == 0 {
        return Err(Error::MissingCache("layer_backward"));
    }
    let cell = params.pack()?;
    let cin = cell.in_channels;
    let mut grad_w = Tensor::zeros(cell.weights.shape())?;
    let mut grad_b = Tensor::zeros(&[4 * f])?;
    let mut grad_seq = vec![R::zero(); t * h * w * cin];
    let mut dh_next = Tensor::zeros(&[h, w, f])?;
    let mut dc_next = Tensor::zeros(&[h, w, f])?;
    for step in (0..t).rev() {
        let mut dh = grad_out.outer(step)?;
        dh.add_assign(&dh_next)?;
        let (g_concat, g_w, g_b, g_c_prev) = backward_packed(&cache.steps[step], &cell, &dh, &dc_next)?;
        grad_w.add_assign(&g_w)?;
        grad_b.add_assign(&g_b)?;
        let (gx, gh) = split_concat(&g_concat, cin)?;
        grad_seq[step * h * w * cin..][..h * w * cin].copy_from_slice(gx.data());
        dh_next = gh;
        dc_next = g_c_prev;
    }
    Ok((
        Tensor::from_vec(&[t, h, w, cin], grad_seq)?,
        params.unpack_grads(&grad_w, grad_b)?,
    ))
}
