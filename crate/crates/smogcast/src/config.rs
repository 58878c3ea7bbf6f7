//! Run configuration file.
//!
//! Every key is optional in the input; unknown keys are rejected. The echoed
//! copy written next to each command's outputs carries every field, defaults
//! included.

use std::path::Path;

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use smogcast_core::data::{days_from_date, SplitSpec, SynthConfig};
use smogcast_core::metrics::{SsimConfig, SsimWindow};
use smogcast_core::nn::Architecture;
use smogcast_core::optim::AdamConfig;
use smogcast_core::train::{EarlyStopConfig, PlateauConfig, TrainConfig};

pub const ECHO_FILE: &str = "config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds weight initialization, batch shuffling and the synthetic generator.
    pub seed: u64,
    pub model: ModelSection,
    pub train: TrainSection,
    pub data: DataSection,
    pub ssim: SsimSection,
    pub synth: SynthSection,
    pub paths: PathsSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub input_channels: usize,
    pub filters: [usize; 2],
    pub kernel: usize,
    pub head_kernel: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub clipnorm: f64,
    pub early_stop_patience: usize,
    pub early_stop_min_delta: f64,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub plateau_min_lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub t_in: usize,
    pub lag: usize,
    pub cadence_days: i64,
    /// Model grid `[H, W]`; inputs larger than this are bilinearly reduced.
    /// Empty keeps the native grid.
    pub grid: Vec<usize>,
    pub train_start: String,
    pub train_end: String,
    pub test_start: String,
    pub test_end: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SsimSection {
    /// `"global"` or `"gaussian"`.
    pub window: String,
    pub size: usize,
    pub sigma: f64,
    pub dynamic_range: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub grid_h: usize,
    pub grid_w: usize,
    pub frames: usize,
    pub n_blobs: usize,
    pub velocity: [f64; 2],
    pub noise_sigma: f64,
    pub blob_sigma: [f64; 2],
    pub end_date: String,
}

/// Paths the command was run with, recorded for provenance only.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub data: String,
    pub target: String,
    pub checkpoint: String,
    pub out: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            model: ModelSection::default(),
            train: TrainSection::default(),
            data: DataSection::default(),
            ssim: SsimSection::default(),
            synth: SynthSection::default(),
            paths: PathsSection::default(),
        }
    }
}

impl Default for ModelSection {
    fn default() -> Self {
        let a = Architecture::default();
        ModelSection {
            input_channels: a.input_channels,
            filters: a.filters,
            kernel: a.kernel,
            head_kernel: a.head_kernel,
        }
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr: t.optimizer.lr,
            beta1: t.optimizer.beta1,
            beta2: t.optimizer.beta2,
            epsilon: t.optimizer.epsilon,
            clipnorm: t.optimizer.clipnorm,
            early_stop_patience: t.early_stop.patience,
            early_stop_min_delta: t.early_stop.min_delta,
            plateau_factor: t.plateau.factor,
            plateau_patience: t.plateau.patience,
            plateau_min_lr: t.plateau.min_lr,
        }
    }
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            t_in: 1,
            lag: 1,
            cadence_days: 5,
            grid: Vec::new(),
            train_start: "2019-01-01".into(),
            train_end: "2022-12-31".into(),
            test_start: "2023-01-01".into(),
            test_end: "2023-12-31".into(),
        }
    }
}

impl Default for SsimSection {
    fn default() -> Self {
        SsimSection {
            window: "global".into(),
            size: 11,
            sigma: 1.5,
            dynamic_range: 1.0,
        }
    }
}

impl Default for SynthSection {
    fn default() -> Self {
        let s = SynthConfig::default();
        SynthSection {
            grid_h: s.grid_h,
            grid_w: s.grid_w,
            frames: s.frames,
            n_blobs: s.n_blobs,
            velocity: [s.velocity.0, s.velocity.1],
            noise_sigma: s.noise_sigma,
            blob_sigma: [s.blob_sigma.0, s.blob_sigma.1],
            end_date: "2023-12-31".into(),
        }
    }
}

fn parse_date(s: &str, key: &str) -> Result<i64> {
    let d = NaiveDate::parse_from_str(s, "%Y-%m-%d").with_context(|| format!("{key}: expected YYYY-MM-DD, got {s:?}"))?;
    Ok(days_from_date(d))
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).context("invalid run config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    /// Fully defaulted TOML text.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config always serializes")
    }

    /// Writes the echo file into `dir`.
    pub fn echo(&self, dir: &Path) -> Result<()> {
        let path = dir.join(ECHO_FILE);
        std::fs::write(&path, self.to_toml()).with_context(|| format!("writing {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        self.train_config().validate()?;
        self.split_spec()?;
        self.ssim_config()?;
        if self.data.t_in == 0 {
            bail!("data.t_in must be at least 1");
        }
        if self.data.cadence_days <= 0 {
            bail!("data.cadence_days must be positive");
        }
        if !(self.data.grid.is_empty() || (self.data.grid.len() == 2 && self.data.grid.iter().all(|&v| v > 0))) {
            bail!("data.grid must be empty or [H, W] with positive entries");
        }
        parse_date(&self.synth.end_date, "synth.end_date")?;
        Ok(())
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            input_channels: self.model.input_channels,
            filters: self.model.filters,
            kernel: self.model.kernel,
            head_kernel: self.model.head_kernel,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            optimizer: AdamConfig {
                lr: t.lr,
                beta1: t.beta1,
                beta2: t.beta2,
                epsilon: t.epsilon,
                clipnorm: t.clipnorm,
            },
            early_stop: EarlyStopConfig {
                patience: t.early_stop_patience,
                min_delta: t.early_stop_min_delta,
            },
            plateau: PlateauConfig {
                factor: t.plateau_factor,
                patience: t.plateau_patience,
                min_lr: t.plateau_min_lr,
            },
            seed: self.seed,
        }
    }

    pub fn split_spec(&self) -> Result<SplitSpec> {
        let d = &self.data;
        let spec = SplitSpec::new(
            (parse_date(&d.train_start, "data.train_start")?, parse_date(&d.train_end, "data.train_end")?),
            (parse_date(&d.test_start, "data.test_start")?, parse_date(&d.test_end, "data.test_end")?),
        )?;
        Ok(spec)
    }

    pub fn ssim_config(&self) -> Result<SsimConfig> {
        let s = &self.ssim;
        let window = match s.window.as_str() {
            "global" => SsimWindow::Global,
            "gaussian" => SsimWindow::Gaussian { size: s.size, sigma: s.sigma },
            other => bail!("ssim.window must be \"global\" or \"gaussian\", got {other:?}"),
        };
        if !(s.dynamic_range > 0.0) || !(s.sigma > 0.0) {
            bail!("ssim.dynamic_range and ssim.sigma must be positive");
        }
        Ok(SsimConfig::with_range(s.dynamic_range, window))
    }

    pub fn grid(&self) -> Option<(usize, usize)> {
        match self.data.grid.as_slice() {
            [h, w] => Some((*h, *w)),
            _ => None,
        }
    }

    pub fn synth_config(&self) -> Result<SynthConfig> {
        let s = &self.synth;
        Ok(SynthConfig {
            grid_h: s.grid_h,
            grid_w: s.grid_w,
            frames: s.frames,
            n_blobs: s.n_blobs,
            velocity: (s.velocity[0], s.velocity[1]),
            noise_sigma: s.noise_sigma,
            blob_sigma: (s.blob_sigma[0], s.blob_sigma[1]),
            seed: self.seed,
            end_day: parse_date(&s.end_date, "synth.end_date")?,
            cadence_days: self.data.cadence_days,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_is_all_defaults() {
        let c = RunConfig::from_toml("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.train_config(), TrainConfig::default());
        assert_eq!(c.architecture(), Architecture::default());
        assert_eq!(c.split_spec().unwrap(), SplitSpec::default_years());
    }

    #[test]
    fn echo_round_trips() {
        let c = RunConfig::from_toml("seed = 7\n[train]\nepochs = 3\nlr = 1e-3\n[data]\ngrid = [8, 8]\n").unwrap();
        let text = c.to_toml();
        assert!(text.contains("plateau_min_lr"));
        assert_eq!(RunConfig::from_toml(&text).unwrap(), c);
        assert_eq!(c.grid(), Some((8, 8)));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("sed = 1").is_err());
        assert!(RunConfig::from_toml("[train]\nepoch = 3").is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(RunConfig::from_toml("[train]\nplateau_factor = 1.5").is_err());
        assert!(RunConfig::from_toml("[data]\ntrain_end = \"2022-02-31\"").is_err());
        assert!(RunConfig::from_toml("[data]\ntest_start = \"2022-06-01\"").is_err());
        assert!(RunConfig::from_toml("[ssim]\nwindow = \"box\"").is_err());
        assert!(RunConfig::from_toml("[data]\ngrid = [8]").is_err());
    }
}
