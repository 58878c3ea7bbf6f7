//! The forecasting stack:
//! batch-norm → ConvLSTM → batch-norm → ConvLSTM → batch-norm → Conv3D → sigmoid.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::batchnorm::{BatchNormParams, BatchStats, BnCache, Mode};
use super::cell::{layer_backward, layer_forward_cached, ConvLSTMCellParams, LayerCache};
use crate::conv::{conv3d_backward, conv3d_forward, ConvSpec};
use crate::error::{Error, Result};
use crate::metrics;
use crate::ops::sigmoid_scalar;
use crate::scalar::Real;
use crate::tensor::Tensor;

/// Layer widths of the stack. The default is the 6 → 16 → 32 → 1 network
/// with 3×3 recurrent kernels and a 3×3×3 head.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Architecture {
    pub input_channels: usize,
    pub filters: [usize; 2],
    pub kernel: usize,
    pub head_kernel: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            input_channels: 6,
            filters: [16, 32],
            kernel: 3,
            head_kernel: 3,
        }
    }
}

impl Architecture {
    /// Canonical one-line description, used in checkpoint headers.
    pub fn describe(&self) -> String {
        format!(
            "bn({c});convlstm({f1},k{k},tanh,sigmoid,seq);bn({f1});convlstm({f2},k{k},tanh,sigmoid,seq);bn({f2});conv3d(1,k{hk},sigmoid)",
            c = self.input_channels,
            f1 = self.filters[0],
            f2 = self.filters[1],
            k = self.kernel,
            hk = self.head_kernel,
        )
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("unrecognized architecture: {text}"));
        let parts: Vec<&str> = text.split(';').collect();
        if parts.len() != 6 {
            return Err(bad());
        }
        let inner = |s: &str, prefix: &str| -> Option<String> {
            s.strip_prefix(prefix)?.strip_suffix(')').map(String::from)
        };
        let num = |s: &str| s.parse::<usize>().ok();
        let c = inner(parts[0], "bn(").and_then(|s| num(&s)).ok_or_else(bad)?;
        let cell = |s: &str| -> Option<(usize, usize)> {
            let body = inner(s, "convlstm(")?;
            let mut it = body.split(',');
            let f = num(it.next()?)?;
            let k = num(it.next()?.strip_prefix('k')?)?;
            Some((f, k))
        };
        let (f1, k) = cell(parts[1]).ok_or_else(bad)?;
        let (f2, _) = cell(parts[3]).ok_or_else(bad)?;
        let hk = inner(parts[5], "conv3d(1,k")
            .and_then(|s| num(s.split(',').next()?))
            .ok_or_else(bad)?;
        let arch = Architecture {
            input_channels: c,
            filters: [f1, f2],
            kernel: k,
            head_kernel: hk,
        };
        if arch.describe() != text {
            return Err(bad());
        }
        Ok(arch)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams<R = f32> {
    pub arch: Architecture,
    pub bn0: BatchNormParams<R>,
    pub cell1: ConvLSTMCellParams<R>,
    pub bn1: BatchNormParams<R>,
    pub cell2: ConvLSTMCellParams<R>,
    pub bn2: BatchNormParams<R>,
    pub head_kernel: Tensor<R>,
    pub head_bias: Tensor<R>,
}

/// Names of the trainable tensors, in the order used by gradients and
/// optimizer state.
pub const TRAINABLE: [&str; 14] = [
    "bn0.gamma",
    "bn0.beta",
    "cell1.kernel",
    "cell1.recurrent_kernel",
    "cell1.bias",
    "bn1.gamma",
    "bn1.beta",
    "cell2.kernel",
    "cell2.recurrent_kernel",
    "cell2.bias",
    "bn2.gamma",
    "bn2.beta",
    "head.kernel",
    "head.bias",
];

/// Names of the batch-norm running statistics.
pub const NON_TRAINABLE: [&str; 6] = [
    "bn0.running_mean",
    "bn0.running_var",
    "bn1.running_mean",
    "bn1.running_var",
    "bn2.running_mean",
    "bn2.running_var",
];

/// Gradients in [`TRAINABLE`] order.
pub type Gradients<R> = Vec<Tensor<R>>;

/// One row of the layer summary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerRow {
    pub name: &'static str,
    pub kind: &'static str,
    /// `(T, H, W, C)` excluding the batch axis.
    pub output_shape: [usize; 4],
    pub params: usize,
}

impl LayerRow {
    pub fn shape_label(&self) -> String {
        let [t, h, w, c] = self.output_shape;
        format!("(None, {t}, {h}, {w}, {c})")
    }
}

impl<R: Real> NetworkParams<R> {
    pub fn zeros(arch: Architecture) -> Result<Self> {
        let [f1, f2] = arch.filters;
        let hk = arch.head_kernel;
        ConvSpec::new_3d(hk, hk, hk, f2, 1)?;
        Ok(NetworkParams {
            arch,
            bn0: BatchNormParams::new(arch.input_channels)?,
            cell1: ConvLSTMCellParams::zeros(arch.kernel, arch.input_channels, f1)?,
            bn1: BatchNormParams::new(f1)?,
            cell2: ConvLSTMCellParams::zeros(arch.kernel, f1, f2)?,
            bn2: BatchNormParams::new(f2)?,
            head_kernel: Tensor::zeros(&[hk, hk, hk, f2, 1])?,
            head_bias: Tensor::zeros(&[1])?,
        })
    }

    /// Seeded initialization; see [`ConvLSTMCellParams::init`] for the cells.
    pub fn init(arch: Architecture, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(arch)?;
        let [f1, f2] = arch.filters;
        p.cell1 = ConvLSTMCellParams::init(arch.kernel, arch.input_channels, f1, &mut rng)?;
        p.cell2 = ConvLSTMCellParams::init(arch.kernel, f1, f2, &mut rng)?;
        let fan_in = arch.head_kernel.pow(3) * f2;
        let bound = 1.0 / Float::sqrt(fan_in as f64);
        for v in p.head_kernel.data_mut() {
            *v = R::of_f64(rng.random_range(-bound..bound));
        }
        Ok(p)
    }

    pub fn trainable(&self) -> [&Tensor<R>; 14] {
        [
            &self.bn0.gamma,
            &self.bn0.beta,
            &self.cell1.kernel,
            &self.cell1.recurrent_kernel,
            &self.cell1.bias,
            &self.bn1.gamma,
            &self.bn1.beta,
            &self.cell2.kernel,
            &self.cell2.recurrent_kernel,
            &self.cell2.bias,
            &self.bn2.gamma,
            &self.bn2.beta,
            &self.head_kernel,
            &self.head_bias,
        ]
    }

    pub fn trainable_mut(&mut self) -> [&mut Tensor<R>; 14] {
        [
            &mut self.bn0.gamma,
            &mut self.bn0.beta,
            &mut self.cell1.kernel,
            &mut self.cell1.recurrent_kernel,
            &mut self.cell1.bias,
            &mut self.bn1.gamma,
            &mut self.bn1.beta,
            &mut self.cell2.kernel,
            &mut self.cell2.recurrent_kernel,
            &mut self.cell2.bias,
            &mut self.bn2.gamma,
            &mut self.bn2.beta,
            &mut self.head_kernel,
            &mut self.head_bias,
        ]
    }

    pub fn non_trainable(&self) -> [&Tensor<R>; 6] {
        [
            &self.bn0.running_mean,
            &self.bn0.running_var,
            &self.bn1.running_mean,
            &self.bn1.running_var,
            &self.bn2.running_mean,
            &self.bn2.running_var,
        ]
    }

    pub fn non_trainable_mut(&mut self) -> [&mut Tensor<R>; 6] {
        [
            &mut self.bn0.running_mean,
            &mut self.bn0.running_var,
            &mut self.bn1.running_mean,
            &mut self.bn1.running_var,
            &mut self.bn2.running_mean,
            &mut self.bn2.running_var,
        ]
    }

    /// Every tensor with its name: trainable first, then running statistics.
    pub fn named_tensors(&self) -> Vec<(&'static str, &Tensor<R>)> {
        TRAINABLE
            .iter()
            .copied()
            .zip(self.trainable())
            .chain(NON_TRAINABLE.iter().copied().zip(self.non_trainable()))
            .collect()
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(&'static str, &mut Tensor<R>)> {
        let (bn0, cell1, bn1, cell2, bn2) = (
            &mut self.bn0,
            &mut self.cell1,
            &mut self.bn1,
            &mut self.cell2,
            &mut self.bn2,
        );
        let mut out: Vec<(&'static str, &mut Tensor<R>)> = Vec::with_capacity(20);
        out.push(("bn0.gamma", &mut bn0.gamma));
        out.push(("bn0.beta", &mut bn0.beta));
        out.push(("cell1.kernel", &mut cell1.kernel));
        out.push(("cell1.recurrent_kernel", &mut cell1.recurrent_kernel));
        out.push(("cell1.bias", &mut cell1.bias));
        out.push(("bn1.gamma", &mut bn1.gamma));
        out.push(("bn1.beta", &mut bn1.beta));
        out.push(("cell2.kernel", &mut cell2.kernel));
        out.push(("cell2.recurrent_kernel", &mut cell2.recurrent_kernel));
        out.push(("cell2.bias", &mut cell2.bias));
        out.push(("bn2.gamma", &mut bn2.gamma));
        out.push(("bn2.beta", &mut bn2.beta));
        out.push(("head.kernel", &mut self.head_kernel));
        out.push(("head.bias", &mut self.head_bias));
        out.push(("bn0.running_mean", &mut bn0.running_mean));
        out.push(("bn0.running_var", &mut bn0.running_var));
        out.push(("bn1.running_mean", &mut bn1.running_mean));
        out.push(("bn1.running_var", &mut bn1.running_var));
        out.push(("bn2.running_mean", &mut bn2.running_mean));
        out.push(("bn2.running_var", &mut bn2.running_var));
        out
    }

    pub fn trainable_count(&self) -> usize {
        self.trainable().iter().map(|t| t.len()).sum()
    }

    pub fn total_count(&self) -> usize {
        self.trainable_count() + self.non_trainable().iter().map(|t| t.len()).sum::<usize>()
    }

    pub fn validate(&self) -> Result<()> {
        let expect = Self::zeros(self.arch)?;
        for ((name, have), (_, want)) in self.named_tensors().into_iter().zip(expect.named_tensors()) {
            have.expect_shape(name, want.shape())?;
        }
        self.bn0.validate()?;
        self.bn1.validate()?;
        self.bn2.validate()
    }

    fn head_spec(&self) -> Result<ConvSpec> {
        let k = self.arch.head_kernel;
        ConvSpec::new_3d(k, k, k, self.arch.filters[1], 1)
    }

    fn check_batch(&self, batch: &Tensor<R>) -> Result<[usize; 5]> {
        match *batch.shape() {
            [b, t, h, w, c] if c == self.arch.input_channels => Ok([b, t, h, w, c]),
            ref s => Err(Error::shape(
                "network input",
                &[0, 0, 0, 0, self.arch.input_channels],
                s,
            )),
        }
    }

    /// Train-mode pass with batch statistics. Pure: the running statistics
    /// are left alone; apply them afterwards with [`apply_batch_stats`](Self::apply_batch_stats).
    pub fn forward_train(&self, batch: &Tensor<R>) -> Result<(Tensor<R>, Tape<R>)> {
        let [b, _, _, _, _] = self.check_batch(batch)?;
        let (a0, bn0) = self.bn0.forward_train(batch)?;
        let (h1, l1) = run_layer(&a0, &self.cell1, b)?;
        let (a1, bn1) = self.bn1.forward_train(&h1)?;
        let (h2, l2) = run_layer(&a1, &self.cell2, b)?;
        let (a2, bn2) = self.bn2.forward_train(&h2)?;
        let out = self.head_forward(&a2, b)?;
        Ok((
            out,
            Tape {
                bn0,
                l1,
                bn1,
                l2,
                bn2,
                a2,
            },
        ))
    }

    /// Inference pass using the running statistics.
    pub fn forward_infer(&self, batch: &Tensor<R>) -> Result<Tensor<R>> {
        let [b, _, _, _, _] = self.check_batch(batch)?;
        let a0 = self.bn0.forward_infer(batch)?;
        let (h1, _) = run_layer(&a0, &self.cell1, b)?;
        let a1 = self.bn1.forward_infer(&h1)?;
        let (h2, _) = run_layer(&a1, &self.cell2, b)?;
        let a2 = self.bn2.forward_infer(&h2)?;
        self.head_forward(&a2, b)
    }

    fn head_forward(&self, a2: &Tensor<R>, batch: usize) -> Result<Tensor<R>> {
        let spec = self.head_spec()?;
        let mut outs = Vec::with_capacity(batch);
        for i in 0..batch {
            let z = conv3d_forward(&a2.outer(i)?, &self.head_kernel, &self.head_bias, &spec)?;
            outs.push(z.map(sigmoid_scalar));
        }
        let out = Tensor::stack(&outs)?;
        out.ensure_finite("network_forward")?;
        Ok(out)
    }

    pub fn apply_batch_stats(&mut self, stats: &[BatchStats; 3]) {
        self.bn0.update_running(&stats[0]);
        self.bn1.update_running(&stats[1]);
        self.bn2.update_running(&stats[2]);
    }

    /// BCE loss and its gradient for every trainable tensor.
    pub fn backward(&self, batch: &Tensor<R>, targets: &Tensor<R>) -> Result<LossAndGrads<R>> {
        let (out, tape) = self.forward_train(batch)?;
        targets.expect_shape("network targets", out.shape())?;
        if let Some(&bad) = targets.data().iter().find(|&&v| !(v >= R::zero() && v <= R::one())) {
            return Err(Error::TargetRange(bad.as_f64()));
        }
        let loss = metrics::bce(targets, &out)?;
        let n = R::of_f64(out.len() as f64);
        // d(BCE)/d(logit) = ŷ − y
        let dz = out.zip_map(targets, "bce grad", |p, y| (p - y) / n)?;
        let b = out.shape()[0];

        let spec = self.head_spec()?;
        let mut g_head_k = Tensor::zeros(self.head_kernel.shape())?;
        let mut g_head_b = Tensor::zeros(&[1])?;
        let mut da2 = Vec::with_capacity(b);
        for i in 0..b {
            let g = conv3d_backward(&tape.a2.outer(i)?, &self.head_kernel, &dz.outer(i)?, &spec)?;
            g_head_k.add_assign(&g.weights)?;
            g_head_b.add_assign(&g.bias)?;
            da2.push(g.input);
        }
        let (dh2, g_bn2_gamma, g_bn2_beta) = self.bn2.backward(&tape.bn2, &Tensor::stack(&da2)?)?;
        let (da1, g_cell2) = backprop_layer(&dh2, &self.cell2, &tape.l2)?;
        let (dh1, g_bn1_gamma, g_bn1_beta) = self.bn1.backward(&tape.bn1, &da1)?;
        let (da0, g_cell1) = backprop_layer(&dh1, &self.cell1, &tape.l1)?;
        let (_, g_bn0_gamma, g_bn0_beta) = self.bn0.backward(&tape.bn0, &da0)?;

        let grads = alloc::vec![
            g_bn0_gamma,
            g_bn0_beta,
            g_cell1.kernel,
            g_cell1.recurrent_kernel,
            g_cell1.bias,
            g_bn1_gamma,
            g_bn1_beta,
            g_cell2.kernel,
            g_cell2.recurrent_kernel,
            g_cell2.bias,
            g_bn2_gamma,
            g_bn2_beta,
            g_head_k,
            g_head_b,
        ];
        Ok(LossAndGrads {
            loss,
            output: out,
            grads,
            stats: tape.batch_stats(),
        })
    }

    /// Layer summary for a `(T, H, W)` input grid.
    pub fn param_table(&self, timesteps: usize, height: usize, width: usize) -> Vec<LayerRow> {
        let [f1, f2] = self.arch.filters;
        let shape = |c| [timesteps, height, width, c];
        let head = self.head_kernel.len() + self.head_bias.len();
        alloc::vec![
            LayerRow { name: "bn0", kind: "BatchNormalization", output_shape: shape(self.arch.input_channels), params: self.bn0.param_count() },
            LayerRow { name: "cell1", kind: "ConvLSTM2D", output_shape: shape(f1), params: self.cell1.param_count() },
            LayerRow { name: "bn1", kind: "BatchNormalization", output_shape: shape(f1), params: self.bn1.param_count() },
            LayerRow { name: "cell2", kind: "ConvLSTM2D", output_shape: shape(f2), params: self.cell2.param_count() },
            LayerRow { name: "bn2", kind: "BatchNormalization", output_shape: shape(f2), params: self.bn2.param_count() },
            LayerRow { name: "head", kind: "Conv3D", output_shape: shape(1), params: head },
        ]
    }
}

/// Loss, network output and gradients from one training batch.
#[derive(Debug, Clone)]
pub struct LossAndGrads<R> {
    pub loss: f64,
    pub output: Tensor<R>,
    pub grads: Gradients<R>,
    pub stats: [BatchStats; 3],
}

/// Intermediates of a train-mode forward pass.
#[derive(Debug, Clone)]
pub struct Tape<R> {
    bn0: BnCache<R>,
    l1: Vec<LayerCache<R>>,
    bn1: BnCache<R>,
    l2: Vec<LayerCache<R>>,
    bn2: BnCache<R>,
    a2: Tensor<R>,
}

impl<R: Real> Tape<R> {
    pub fn batch_stats(&self) -> [BatchStats; 3] {
        [
            self.bn0.stats().clone(),
            self.bn1.stats().clone(),
            self.bn2.stats().clone(),
        ]
    }
}

fn run_layer<R: Real>(
    x: &Tensor<R>,
    cell: &ConvLSTMCellParams<R>,
    batch: usize,
) -> Result<(Tensor<R>, Vec<LayerCache<R>>)> {
    let mut outs = Vec::with_capacity(batch);
    let mut caches = Vec::with_capacity(batch);
    for i in 0..batch {
        let (h, cache) = layer_forward_cached(&x.outer(i)?, cell)?;
        outs.push(h);
        caches.push(cache);
    }
    Ok((Tensor::stack(&outs)?, caches))
}

fn backprop_layer<R: Real>(
    grad_out: &Tensor<R>,
    cell: &ConvLSTMCellParams<R>,
    caches: &[LayerCache<R>],
) -> Result<(Tensor<R>, ConvLSTMCellParams<R>)> {
    let mut acc: Option<ConvLSTMCellParams<R>> = None;
    let mut dx = Vec::with_capacity(caches.len());
    for (i, cache) in caches.iter().enumerate() {
        let (g_seq, g) = layer_backward(cache, cell, &grad_out.outer(i)?)?;
        dx.push(g_seq);
        acc = Some(match acc {
            None => g,
            Some(mut a) => {
                a.kernel.add_assign(&g.kernel)?;
                a.recurrent_kernel.add_assign(&g.recurrent_kernel)?;
                a.bias.add_assign(&g.bias)?;
                a
            }
        });
    }
    Ok((Tensor::stack(&dx)?, acc.ok_or(Error::Empty("batch"))?))
}

/// Mode-dispatching forward; train mode updates the running statistics.
pub fn network_forward<R: Real>(batch: &Tensor<R>, params: &mut NetworkParams<R>, mode: Mode) -> Result<Tensor<R>> {
    match mode {
        Mode::Train => {
            let (out, tape) = params.forward_train(batch)?;
            params.apply_batch_stats(&tape.batch_stats());
            Ok(out)
        }
        Mode::Infer => params.forward_infer(batch),
    }
}

pub fn network_backward<R: Real>(
    batch: &Tensor<R>,
    targets: &Tensor<R>,
    params: &NetworkParams<R>,
) -> Result<LossAndGrads<R>> {
    params.backward(batch, targets)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_counts_at_full_grid() {
        let p = NetworkParams::<f32>::zeros(Architecture::default()).unwrap();
        let rows = p.param_table(1, 291, 512);
        let counts: Vec<usize> = rows.iter().map(|r| r.params).collect();
        assert_eq!(counts, [24, 12736, 64, 55424, 128, 865]);
        assert_eq!(p.total_count(), 69241);
        assert_eq!(p.trainable_count(), 69133);
        assert_eq!(rows[5].shape_label(), "(None, 1, 291, 512, 1)");
    }

    #[test]
    fn architecture_text_round_trips() {
        let a = Architecture::default();
        assert_eq!(Architecture::parse(&a.describe()).unwrap(), a);
        let small = Architecture { input_channels: 2, filters: [2, 3], kernel: 3, head_kernel: 1 };
        assert_eq!(Architecture::parse(&small.describe()).unwrap(), small);
        assert!(Architecture::parse("bn(6);nonsense").is_err());
    }

    #[test]
    fn rejects_wrong_channel_count_and_bad_targets() {
        let p = NetworkParams::<f64>::init(Architecture { input_channels: 2, filters: [2, 2], kernel: 3, head_kernel: 3 }, 0).unwrap();
        assert!(p.forward_infer(&Tensor::zeros(&[1, 1, 4, 4, 3]).unwrap()).is_err());
        let x = Tensor::full(&[1, 1, 4, 4, 2], 0.3).unwrap();
        let y = Tensor::full(&[1, 1, 4, 4, 1], 1.5).unwrap();
        assert!(matches!(p.backward(&x, &y), Err(Error::TargetRange(_))));
        let y = Tensor::full(&[1, 1, 4, 4, 2], 0.5).unwrap();
        assert!(p.backward(&x, &y).is_err());
    }
}
