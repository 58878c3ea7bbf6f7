//! Shuffling batch generator and the training loop with early stopping and
//! learning-rate reduction on plateau.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::WindowedDataset;
use crate::error::{Error, Result};
use crate::metrics;
use crate::nn::NetworkParams;
use crate::optim::{adam_step, clip_by_global_norm, AdamConfig, AdamState};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EarlyStopConfig {
    pub patience: usize,
    pub min_delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlateauConfig {
    pub factor: f64,
    pub patience: usize,
    pub min_lr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: AdamConfig,
    /// Monitors validation loss.
    pub early_stop: EarlyStopConfig,
    pub plateau: PlateauConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 1,
            optimizer: AdamConfig::default(),
            early_stop: EarlyStopConfig {
                patience: 10,
                min_delta: 0.0,
            },
            plateau: PlateauConfig {
                factor: 0.5,
                patience: 5,
                min_lr: 1e-7,
            },
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be positive"));
        }
        if !(self.plateau.factor > 0.0 && self.plateau.factor < 1.0) {
            return Err(Error::invalid("plateau factor must lie in (0, 1)"));
        }
        if !(self.plateau.min_lr >= 0.0) || !(self.early_stop.min_delta >= 0.0) {
            return Err(Error::invalid("min_lr and min_delta must be non-negative"));
        }
        Ok(())
    }

    /// Canonical text form; floats use the shortest round-trip representation.
    pub fn describe(&self) -> String {
        let o = &self.optimizer;
        format!(
            "epochs={};batch_size={};lr={};beta1={};beta2={};epsilon={};clipnorm={};early_stop.patience={};early_stop.min_delta={};plateau.factor={};plateau.patience={};plateau.min_lr={};seed={}",
            self.epochs,
            self.batch_size,
            o.lr,
            o.beta1,
            o.beta2,
            o.epsilon,
            o.clipnorm,
            self.early_stop.patience,
            self.early_stop.min_delta,
            self.plateau.factor,
            self.plateau.patience,
            self.plateau.min_lr,
            self.seed
        )
    }
}

/// Seeded per-epoch shuffling of sample indices into batches.
#[derive(Debug, Clone)]
pub struct DataGenerator {
    samples: usize,
    batch_size: usize,
    seed: u64,
}

impl DataGenerator {
    pub fn new(samples: usize, batch_size: usize, seed: u64) -> Result<Self> {
        if samples == 0 {
            return Err(Error::Empty("data generator"));
        }
        if batch_size == 0 {
            return Err(Error::invalid("batch_size must be positive"));
        }
        Ok(DataGenerator {
            samples,
            batch_size,
            seed,
        })
    }

    /// Permutation for `epoch`; each epoch draws from its own ChaCha stream.
    pub fn permutation(&self, epoch: usize) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(epoch as u64);
        let mut idx: Vec<usize> = (0..self.samples).collect();
        idx.shuffle(&mut rng);
        idx
    }

    /// Batches of `epoch`; the last one keeps the remainder.
    pub fn epoch(&self, epoch: usize) -> Vec<Vec<usize>> {
        self.permutation(epoch)
            .chunks(self.batch_size)
            .map(|c| c.to_vec())
            .collect()
    }
}

/// Best-so-far tracker shared by early stopping and plateau detection.
#[derive(Debug, Clone)]
struct Monitor {
    best: f64,
    wait: usize,
    min_delta: f64,
}

impl Monitor {
    fn new(min_delta: f64) -> Self {
        Monitor {
            best: f64::INFINITY,
            wait: 0,
            min_delta,
        }
    }

    fn observe(&mut self, value: f64) {
        if value < self.best - self.min_delta {
            self.best = value;
            self.wait = 0;
        } else {
            self.wait += 1;
        }
    }
}

/// Stops once the monitored value has not improved for `patience` epochs.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    monitor: Monitor,
    patience: usize,
}

impl EarlyStopping {
    pub fn new(cfg: EarlyStopConfig) -> Self {
        EarlyStopping {
            monitor: Monitor::new(cfg.min_delta),
            patience: cfg.patience,
        }
    }

    /// Records one epoch's value; `true` means stop now.
    pub fn update(&mut self, value: f64) -> bool {
        self.monitor.observe(value);
        self.monitor.wait >= self.patience
    }
}

/// Multiplies the learning rate by `factor` (floored at `min_lr`) after
/// `patience` epochs without improvement.
#[derive(Debug, Clone)]
pub struct PlateauScheduler {
    monitor: Monitor,
    cfg: PlateauConfig,
}

impl PlateauScheduler {
    pub fn new(cfg: PlateauConfig) -> Self {
        PlateauScheduler {
            monitor: Monitor::new(0.0),
            cfg,
        }
    }

    /// Returns the reduced rate when the rule fires.
    pub fn update(&mut self, value: f64, lr: f64) -> Option<f64> {
        self.monitor.observe(value);
        if self.monitor.wait >= self.cfg.patience && lr > self.cfg.min_lr {
            self.monitor.wait = 0;
            Some((lr * self.cfg.factor).max(self.cfg.min_lr))
        } else {
            None
        }
    }
}

/// One completed epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub train_mse: f64,
    pub val_mse: f64,
    /// Learning rate used during this epoch.
    pub lr: f64,
    pub plateau_triggered: bool,
    pub stopped_early: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub rows: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: NetworkParams<f32>,
    pub optimizer: AdamState<f32>,
    pub history: TrainHistory,
}

/// Inference-mode predictions for every window, `[N, T, H, W, 1]`.
pub fn predict(params: &NetworkParams<f32>, samples: &Tensor<f32>) -> Result<Tensor<f32>> {
    let n = samples.shape()[0];
    let mut outs = Vec::with_capacity(n);
    for i in 0..n {
        let x = crate::data::window::gather(samples, &[i])?;
        outs.push(params.forward_infer(&x)?.outer(0)?);
    }
    Tensor::stack(&outs)
}

/// Mean BCE and MSE over a whole split in inference mode.
pub fn evaluate(params: &NetworkParams<f32>, data: &WindowedDataset) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(Error::Empty("evaluation split"));
    }
    let (mut loss, mut sq) = (0.0, 0.0);
    let mut count = 0usize;
    for i in 0..data.len() {
        let (x, y) = data.batch(&[i])?;
        let p = params.forward_infer(&x)?;
        let n = y.len() as f64;
        loss += metrics::bce(&y, &p)? * n;
        sq += metrics::mse(&y, &p)? * n;
        count += y.len();
    }
    Ok((loss / count as f64, sq / count as f64))
}

/// Trains from `params` and returns the final weights, optimizer state and
/// history. `on_epoch` sees each history row as soon as it is complete.
pub fn train(
    params: NetworkParams<f32>,
    train_set: &WindowedDataset,
    val_set: &WindowedDataset,
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    let optimizer = AdamState::new(params.trainable(), cfg.optimizer)?;
    train_from(params, optimizer, train_set, val_set, cfg, on_epoch)
}

/// [`train`] continuing from an existing optimizer state.
pub fn train_from(
    mut params: NetworkParams<f32>,
    mut optimizer: AdamState<f32>,
    train_set: &WindowedDataset,
    val_set: &WindowedDataset,
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    params.validate()?;
    if train_set.is_empty() {
        return Err(Error::Empty("train split"));
    }
    if val_set.is_empty() {
        return Err(Error::Empty("validation split"));
    }
    let generator = DataGenerator::new(train_set.len(), cfg.batch_size, cfg.seed)?;
    let mut stopper = EarlyStopping::new(cfg.early_stop);
    let mut plateau = PlateauScheduler::new(cfg.plateau);
    let mut history = TrainHistory::default();

    for epoch in 1..=cfg.epochs {
        let lr = optimizer.lr();
        let batches = generator.epoch(epoch);
        let (mut loss_sum, mut mse_sum) = (0.0, 0.0);
        for (b, idx) in batches.iter().enumerate() {
            let (x, y) = train_set.batch(idx)?;
            let non_finite = Error::NonFiniteLoss { epoch, batch: b };
            let mut out = params.backward(&x, &y).map_err(|e| match e {
                Error::NonFinite(_) => non_finite.clone(),
                other => other,
            })?;
            if !out.loss.is_finite() || out.grads.iter().any(|g| !g.all_finite()) {
                return Err(non_finite);
            }
            loss_sum += out.loss;
            mse_sum += metrics::mse(&y, &out.output)?;
            params.apply_batch_stats(&out.stats);
            clip_by_global_norm(&mut out.grads, cfg.optimizer.clipnorm);
            adam_step(&mut params.trainable_mut(), &out.grads, &mut optimizer)?;
        }
        let (val_loss, val_mse) = evaluate(&params, val_set)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch: batches.len() });
        }
        let reduced = plateau.update(val_loss, lr);
        if let Some(new_lr) = reduced {
            optimizer.set_lr(new_lr);
        }
        let stop = stopper.update(val_loss);
        let row = EpochRecord {
            epoch,
            train_loss: loss_sum / batches.len() as f64,
            val_loss,
            train_mse: mse_sum / batches.len() as f64,
            val_mse,
            lr,
            plateau_triggered: reduced.is_some(),
            stopped_early: stop,
        };
        on_epoch(&row);
        history.rows.push(row);
        if stop {
            break;
        }
    }
    Ok(TrainOutcome {
        params,
        optimizer,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_covers_every_index() {
        let g = DataGenerator::new(5, 1, 7).unwrap();
        let mut seen: Vec<usize> = g.epoch(1).into_iter().flatten().collect();
        seen.sort_unstable();
        assert_eq!(seen, [0, 1, 2, 3, 4]);
        let sizes: Vec<usize> = DataGenerator::new(5, 2, 7).unwrap().epoch(1).iter().map(|b| b.len()).collect();
        assert_eq!(sizes, [2, 2, 1]);
        assert!(DataGenerator::new(0, 1, 0).is_err());
    }

    #[test]
    fn early_stopping_after_patience() {
        let mut s = EarlyStopping::new(EarlyStopConfig { patience: 2, min_delta: 0.0 });
        let stops: Vec<bool> = [1.0, 0.8, 0.7, 0.75, 0.9].iter().map(|&v| s.update(v)).collect();
        assert_eq!(stops, [false, false, false, false, true]);
    }

    #[test]
    fn plateau_halves_and_floors() {
        let mut p = PlateauScheduler::new(PlateauConfig { factor: 0.5, patience: 1, min_lr: 0.3 });
        assert_eq!(p.update(1.0, 1.0), None);
        assert_eq!(p.update(1.0, 1.0), Some(0.5));
        assert_eq!(p.update(1.0, 0.5), Some(0.3));
        assert_eq!(p.update(1.0, 0.3), None);
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::default();
        c.plateau.factor = 1.0;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::default();
        c.batch_size = 0;
        assert!(c.validate().is_err());
        assert!(TrainConfig::default().describe().starts_with("epochs=50;batch_size=1;lr=0.00001;"));
    }
}
