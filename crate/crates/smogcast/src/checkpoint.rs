//! SMGC checkpoint container.
//!
//! The header starts with a `digest = "<sha256>"` line covering everything
//! after it (rest of the header and the payload), followed by TOML holding
//! the architecture, the training-config description, the fingerprint and
//! the tensor directory. Tensors are stored in directory order as
//! contiguous little-endian `f32` blocks.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use smogcast_core::data::NormStats;
use smogcast_core::nn::{Architecture, NetworkParams, TRAINABLE};
use smogcast_core::optim::{AdamConfig, AdamState};
use smogcast_core::train::TrainConfig;
use smogcast_core::Tensor;

use crate::format::{floats, frame, hex, unframe, FormatError, Result};

pub const MAGIC: &[u8; 4] = b"SMGC";
const DIGEST_PREFIX: &str = "digest = \"";

/// Hash of the architecture and training-config descriptions.
pub fn fingerprint(arch: &Architecture, train_spec: &str) -> String {
    let mut h = Sha256::new();
    h.update(arch.describe().as_bytes());
    h.update(b"\n");
    h.update(train_spec.as_bytes());
    hex(&h.finalize())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: NetworkParams<f32>,
    pub optimizer: Option<AdamState<f32>>,
    /// [`TrainConfig::describe`] of the run that produced the weights.
    pub train_spec: String,
    pub epochs_completed: usize,
    pub predictor_stats: Option<NormStats>,
    pub target_stats: Option<NormStats>,
    pub target_name: String,
    pub target_unit: String,
    /// Echoed run config text.
    pub run_config: String,
}

impl Checkpoint {
    pub fn new(params: NetworkParams<f32>, train: &TrainConfig) -> Self {
        Checkpoint {
            params,
            optimizer: None,
            train_spec: train.describe(),
            epochs_completed: 0,
            predictor_stats: None,
            target_stats: None,
            target_name: String::new(),
            target_unit: String::new(),
            run_config: String::new(),
        }
    }

    pub fn fingerprint(&self) -> String {
        fingerprint(&self.params.arch, &self.train_spec)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    architecture: String,
    train_config: String,
    fingerprint: String,
    epochs_completed: usize,
    target_name: String,
    target_unit: String,
    optimizer: Option<OptimizerHeader>,
    run_config: String,
    tensors: Vec<Entry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OptimizerHeader {
    step: u64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    clipnorm: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    /// Byte offset into the payload.
    offset: usize,
}

fn stats_blocks(prefix: &str, stats: &Option<NormStats>) -> Result<Vec<(String, Tensor<f32>)>> {
    let Some(s) = stats else { return Ok(Vec::new()) };
    let n = s.features();
    Ok(vec![
        (format!("{prefix}.min"), Tensor::from_vec(&[n], s.min.clone())?),
        (format!("{prefix}.max"), Tensor::from_vec(&[n], s.max.clone())?),
    ])
}

fn blocks(ck: &Checkpoint) -> Result<Vec<(String, Tensor<f32>)>> {
    let mut out: Vec<(String, Tensor<f32>)> =
        ck.params.named_tensors().into_iter().map(|(n, t)| (n.to_string(), t.clone())).collect();
    if let Some(opt) = &ck.optimizer {
        for (name, m) in TRAINABLE.iter().zip(&opt.m) {
            out.push((format!("adam.m.{name}"), m.clone()));
        }
        for (name, v) in TRAINABLE.iter().zip(&opt.v) {
            out.push((format!("adam.v.{name}"), v.clone()));
        }
    }
    out.extend(stats_blocks("norm.predictor", &ck.predictor_stats)?);
    out.extend(stats_blocks("norm.target", &ck.target_stats)?);
    Ok(out)
}

pub fn encode(ck: &Checkpoint) -> Result<Vec<u8>> {
    ck.params.validate()?;
    let blocks = blocks(ck)?;
    let mut tensors = Vec::with_capacity(blocks.len());
    let mut payload: Vec<f32> = Vec::new();
    for (name, t) in &blocks {
        tensors.push(Entry { name: name.clone(), shape: t.shape().to_vec(), offset: payload.len() * 4 });
        payload.extend_from_slice(t.data());
    }
    let header = Header {
        architecture: ck.params.arch.describe(),
        train_config: ck.train_spec.clone(),
        fingerprint: ck.fingerprint(),
        epochs_completed: ck.epochs_completed,
        target_name: ck.target_name.clone(),
        target_unit: ck.target_unit.clone(),
        optimizer: ck.optimizer.as_ref().map(|o| OptimizerHeader {
            step: o.step,
            lr: o.config.lr,
            beta1: o.config.beta1,
            beta2: o.config.beta2,
            epsilon: o.config.epsilon,
            clipnorm: o.config.clipnorm,
        }),
        run_config: ck.run_config.clone(),
        tensors,
    };
    let body = toml::to_string(&header).map_err(|e| FormatError::Header(e.to_string()))?;
    let payload_bytes: Vec<u8> = payload.iter().flat_map(|v| v.to_le_bytes()).collect();
    let digest = digest(&body, &payload_bytes);
    Ok(frame(MAGIC, &format!("{DIGEST_PREFIX}{digest}\"\n{body}"), &payload))
}

fn digest(body: &str, payload: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(body.as_bytes());
    h.update(payload);
    hex(&h.finalize())
}

fn take(map: &mut Vec<(String, Tensor<f32>)>, name: &str) -> Result<Tensor<f32>> {
    if map.first().map(|(n, _)| n.as_str()) != Some(name) {
        let found = map.first().map_or("end of directory", |(n, _)| n.as_str());
        return Err(FormatError::Header(format!("expected tensor {name}, found {found}")));
    }
    Ok(map.remove(0).1)
}

fn take_stats(map: &mut Vec<(String, Tensor<f32>)>, prefix: &str) -> Result<Option<NormStats>> {
    if !map.first().is_some_and(|(n, _)| n.starts_with(prefix)) {
        return Ok(None);
    }
    let min = take(map, &format!("{prefix}.min"))?.into_vec();
    let max = take(map, &format!("{prefix}.max"))?.into_vec();
    if min.len() != max.len() {
        return Err(FormatError::Header(format!("{prefix} min/max lengths differ")));
    }
    Ok(Some(NormStats { min, max }))
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let (text, payload) = unframe(MAGIC, bytes)?;
    let (first, body) = text.split_once('\n').ok_or_else(|| FormatError::Header("missing digest line".into()))?;
    let stored = first
        .strip_prefix(DIGEST_PREFIX)
        .and_then(|s| s.strip_suffix('"'))
        .ok_or_else(|| FormatError::Header("missing digest line".into()))?;
    let parsed: std::result::Result<Header, _> = toml::from_str(body);
    if stored != digest(body, payload) {
        // A short payload under an intact header is reported as truncation.
        if let Ok(h) = &parsed {
            let declared: usize = h.tensors.iter().map(|e| e.shape.iter().product::<usize>() * 4).sum();
            if payload.len() < declared {
                return Err(FormatError::Truncated(format!("payload holds {} of {declared} bytes", payload.len())));
            }
        }
        return Err(FormatError::Checksum);
    }
    let h = parsed.map_err(|e| FormatError::Header(e.to_string()))?;
    let arch = Architecture::parse(&h.architecture)?;
    let computed = fingerprint(&arch, &h.train_config);
    if computed != h.fingerprint {
        return Err(FormatError::Fingerprint { stored: h.fingerprint, computed });
    }

    let mut offset = 0usize;
    let mut count = 0usize;
    for e in &h.tensors {
        if e.offset != offset {
            return Err(FormatError::Header(format!("tensor {} at offset {}, expected {offset}", e.name, e.offset)));
        }
        let n = e.shape.iter().product::<usize>();
        offset += n * 4;
        count += n;
    }
    let values = floats(payload, count)?;
    let mut map = Vec::with_capacity(h.tensors.len());
    let mut at = 0;
    for e in &h.tensors {
        let n = e.shape.iter().product::<usize>();
        map.push((e.name.clone(), Tensor::from_vec(&e.shape, values[at..at + n].to_vec())?));
        at += n;
    }

    let mut params = NetworkParams::zeros(arch)?;
    for (name, slot) in params.named_tensors_mut() {
        let t = take(&mut map, name)?;
        t.expect_shape(name, slot.shape())?;
        *slot = t;
    }
    params.validate()?;

    let optimizer = match h.optimizer {
        None => None,
        Some(o) => {
            let config = AdamConfig { lr: o.lr, beta1: o.beta1, beta2: o.beta2, epsilon: o.epsilon, clipnorm: o.clipnorm };
            let mut state = AdamState::new(params.trainable(), config)?;
            state.step = o.step;
            for (name, m) in TRAINABLE.iter().zip(state.m.iter_mut()) {
                let t = take(&mut map, &format!("adam.m.{name}"))?;
                t.expect_shape("adam.m", m.shape())?;
                *m = t;
            }
            for (name, v) in TRAINABLE.iter().zip(state.v.iter_mut()) {
                let t = take(&mut map, &format!("adam.v.{name}"))?;
                t.expect_shape("adam.v", v.shape())?;
                *v = t;
            }
            Some(state)
        }
    };
    let predictor_stats = take_stats(&mut map, "norm.predictor")?;
    let target_stats = take_stats(&mut map, "norm.target")?;
    if let Some((name, _)) = map.first() {
        return Err(FormatError::Header(format!("unexpected tensor {name}")));
    }

    Ok(Checkpoint {
        params,
        optimizer,
        train_spec: h.train_config,
        epochs_completed: h.epochs_completed,
        predictor_stats,
        target_stats,
        target_name: h.target_name,
        target_unit: h.target_unit,
        run_config: h.run_config,
    })
}

pub fn save(path: &Path, ck: &Checkpoint) -> Result<()> {
    std::fs::write(path, encode(ck)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    decode(&std::fs::read(path)?)
}
