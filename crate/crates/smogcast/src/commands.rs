//! The five subcommands as library functions. The binary only parses flags.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, ensure, Context, Result};
use chrono::NaiveDate;
use smogcast_core::data::{
    days_from_date, downsample_bilinear, impute, last_step, make_windows, partition, predictor_windows, synth_advection,
    DatasetCube, NormStats, WindowedDataset,
};
use smogcast_core::metrics::{bce, mse, ssim_series};
use smogcast_core::nn::NetworkParams;
use smogcast_core::train;
use smogcast_core::Tensor;

use crate::checkpoint::{self, Checkpoint};
use crate::config::RunConfig;
use crate::csv::{self, RowWriter};
use crate::smgd;

pub const PREDICTORS_FILE: &str = "predictors.smgd";
pub const TARGET_FILE: &str = "target.smgd";
pub const CHECKPOINT_FILE: &str = "model.smgc";
pub const HISTORY_FILE: &str = "history.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SSIM_FILE: &str = "ssim.csv";
pub const LOSS_CURVE_FILE: &str = "loss_curve.csv";
pub const SSIM_OVER_TIME_FILE: &str = "ssim_over_time.csv";
pub const POINT_FILE: &str = "point_series.csv";

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Imputes and, when the config asks for a coarser grid, resamples.
fn prepare_cube(cube: &DatasetCube, cfg: &RunConfig) -> Result<DatasetCube> {
    cube.require_cadence(cfg.data.cadence_days)?;
    let filled = impute(cube)?;
    Ok(match cfg.grid() {
        Some((h, w)) if (h, w) != (cube.dims()[1], cube.dims()[2]) => downsample_bilinear(&filled, h, w)?,
        _ => filled,
    })
}

fn windows(cfg: &RunConfig, data: &Path, target: &Path) -> Result<WindowedDataset> {
    let p = smgd::read(data).with_context(|| format!("reading {}", data.display()))?;
    let t = smgd::read(target).with_context(|| format!("reading {}", target.display()))?;
    let channels = p.dims()[3];
    ensure!(
        channels == cfg.model.input_channels,
        "predictor cube has {channels} features, model expects {}",
        cfg.model.input_channels
    );
    ensure!(t.dims()[3] == 1, "target cube must hold a single feature");
    Ok(make_windows(&prepare_cube(&p, cfg)?, &prepare_cube(&t, cfg)?, cfg.data.t_in, cfg.data.lag)?)
}

// ---------------------------------------------------------------- synth

#[derive(Debug, Clone, Default)]
pub struct SynthArgs {
    pub grid: Option<(usize, usize)>,
    pub frames: Option<usize>,
    pub seed: Option<u64>,
    pub config: Option<PathBuf>,
    pub out: PathBuf,
}

/// Writes `predictors.smgd` and `target.smgd` into the output directory.
pub fn synth(a: &SynthArgs) -> Result<(PathBuf, PathBuf)> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some((h, w)) = a.grid {
        cfg.synth.grid_h = h;
        cfg.synth.grid_w = w;
    }
    if let Some(f) = a.frames {
        cfg.synth.frames = f;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.paths.out = display(&a.out);
    cfg.validate()?;
    let (p, t) = synth_advection(&cfg.synth_config()?)?;

    create_dir(&a.out)?;
    let (pp, tp) = (a.out.join(PREDICTORS_FILE), a.out.join(TARGET_FILE));
    smgd::write(&pp, &p)?;
    smgd::write(&tp, &t)?;
    ensure!(smgd::read(&pp)? == p && smgd::read(&tp)? == t, "written cubes failed to read back");
    cfg.echo(&a.out)?;
    Ok((pp, tp))
}

// ---------------------------------------------------------------- train

#[derive(Debug, Clone, Default)]
pub struct TrainArgs {
    pub data: PathBuf,
    pub target: PathBuf,
    pub config: Option<PathBuf>,
    pub out: PathBuf,
}

/// Runs the pipeline and training loop; writes `model.smgc`, `history.csv`
/// and the echoed config. History rows hit disk as each epoch completes.
pub fn train(a: &TrainArgs) -> Result<Checkpoint> {
    let mut cfg = load_config(a.config.as_deref())?;
    // The checkpoint embeds the config without paths so reruns into other
    // directories produce identical files.
    let portable = RunConfig { paths: Default::default(), ..cfg.clone() }.to_toml();
    cfg.paths.data = display(&a.data);
    cfg.paths.target = display(&a.target);
    cfg.paths.out = display(&a.out);
    create_dir(&a.out)?;
    cfg.echo(&a.out)?;

    let all = windows(&cfg, &a.data, &a.target)?;
    let (train_set, val_set) = smogcast_core::data::split(&all, &cfg.split_spec()?)?;
    let train_cfg = cfg.train_config();
    let params = NetworkParams::init(cfg.architecture(), cfg.seed)?;

    let mut history = RowWriter::create(&a.out.join(HISTORY_FILE), csv::HISTORY_HEADER)?;
    let mut write_err = None;
    let outcome = train::train(params, &train_set, &val_set, &train_cfg, &mut |r| {
        if write_err.is_none() {
            write_err = history.row(&csv::history_row(r)).err();
        }
    });
    if let Some(e) = write_err {
        return Err(e.context("writing history"));
    }
    let outcome = outcome.context("training aborted; history.csv holds the completed epochs")?;

    let target = smgd::read(&a.target)?;
    let ck = Checkpoint {
        optimizer: Some(outcome.optimizer),
        epochs_completed: outcome.history.len(),
        predictor_stats: train_set.predictor_stats.clone(),
        target_stats: train_set.target_stats.clone(),
        target_name: target.feature_names[0].clone(),
        target_unit: target.units[0].clone(),
        run_config: portable,
        ..Checkpoint::new(outcome.params, &train_cfg)
    };
    let path = a.out.join(CHECKPOINT_FILE);
    checkpoint::save(&path, &ck)?;
    ensure!(checkpoint::load(&path)? == ck, "checkpoint failed to read back");
    Ok(ck)
}

// ---------------------------------------------------------------- evaluate

/// Config for running a checkpoint: an explicit file must match the
/// checkpoint's fingerprint; otherwise the embedded copy is used.
fn checkpoint_config(ck: &Checkpoint, path: Option<&Path>) -> Result<RunConfig> {
    let cfg = match path {
        Some(p) => {
            let cfg = RunConfig::load(p)?;
            let fp = checkpoint::fingerprint(&cfg.architecture(), &cfg.train_config().describe());
            if fp != ck.fingerprint() {
                bail!("fingerprint mismatch: {} does not describe the checkpoint's architecture and training config", p.display());
            }
            cfg
        }
        None if ck.run_config.is_empty() => bail!("checkpoint carries no run config; pass --config"),
        None => RunConfig::from_toml(&ck.run_config).context("embedded run config")?,
    };
    ensure!(cfg.architecture() == ck.params.arch, "fingerprint mismatch: architecture differs from the checkpoint");
    Ok(cfg)
}

fn stats(ck: &Checkpoint) -> Result<(&NormStats, &NormStats)> {
    match (&ck.predictor_stats, &ck.target_stats) {
        (Some(p), Some(t)) => Ok((p, t)),
        _ => bail!("checkpoint has no normalization stats"),
    }
}

#[derive(Debug, Clone, Default)]
pub struct EvalArgs {
    pub checkpoint: PathBuf,
    pub data: PathBuf,
    pub target: PathBuf,
    pub config: Option<PathBuf>,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub epochs: usize,
    pub loss: f64,
    pub mse: f64,
    pub avg_ssim: f64,
    pub ssim: Vec<(usize, i64, f64)>,
}

/// Scores the checkpoint on the test split: `metrics.csv` and `ssim.csv`.
pub fn evaluate(a: &EvalArgs) -> Result<Evaluation> {
    let ck = checkpoint::load(&a.checkpoint).with_context(|| format!("loading {}", a.checkpoint.display()))?;
    let mut cfg = checkpoint_config(&ck, a.config.as_deref())?;
    let (ps, ts) = stats(&ck)?;
    cfg.paths.checkpoint = display(&a.checkpoint);
    cfg.paths.data = display(&a.data);
    cfg.paths.target = display(&a.target);
    cfg.paths.out = display(&a.out);

    let all = windows(&cfg, &a.data, &a.target)?;
    let (_, test) = partition(&all, &cfg.split_spec()?)?;
    let test = test.normalized(ps, ts)?;
    let pred = train::predict(&ck.params, &test.samples)?;
    let series = ssim_series(&last_step(&pred)?, &test.final_targets()?, &cfg.ssim_config()?)?;
    let ev = Evaluation {
        epochs: ck.epochs_completed,
        loss: bce(&test.targets, &pred)?,
        mse: mse(&test.targets, &pred)?,
        avg_ssim: series.mean,
        ssim: series.values.iter().map(|&(i, s)| (i, test.sample_dates[i], s)).collect(),
    };

    create_dir(&a.out)?;
    cfg.echo(&a.out)?;
    let metrics = a.out.join(METRICS_FILE);
    csv::write(&metrics, csv::METRICS_HEADER, &[format!("{},{},{},{}", ev.epochs, ev.loss, ev.mse, ev.avg_ssim)])?;
    let rows = ev.ssim.iter().map(|&(i, d, s)| Ok(format!("{i},{},{s}", csv::date(d)?))).collect::<Result<Vec<_>>>()?;
    let ssim_path = a.out.join(SSIM_FILE);
    csv::write(&ssim_path, csv::SSIM_HEADER, &rows)?;
    ensure!(csv::read(&metrics, csv::METRICS_HEADER)?.len() == 1, "metrics.csv failed to read back");
    ensure!(csv::read(&ssim_path, csv::SSIM_HEADER)?.len() == test.len(), "ssim.csv failed to read back");
    Ok(ev)
}

// ---------------------------------------------------------------- predict

#[derive(Debug, Clone, Default)]
pub struct PredictArgs {
    pub checkpoint: PathBuf,
    pub data: PathBuf,
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    /// Inclusive forecast-date range; open ends take every window.
    pub start: Option<NaiveDate>,
    pub end: Option<NaiveDate>,
}

pub fn denorm_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map_or_else(|| "predictions".into(), |s| s.to_string_lossy().into_owned());
    out.with_file_name(format!("{stem}_denorm.smgd"))
}

/// Forecasts every window of the predictor cube (within the date range) and
/// writes the normalized cube to `out` and the denormalized twin beside it.
pub fn predict(a: &PredictArgs) -> Result<(DatasetCube, DatasetCube)> {
    let ck = checkpoint::load(&a.checkpoint).with_context(|| format!("loading {}", a.checkpoint.display()))?;
    let mut cfg = checkpoint_config(&ck, a.config.as_deref())?;
    let (ps, ts) = stats(&ck)?;
    cfg.paths.checkpoint = display(&a.checkpoint);
    cfg.paths.data = display(&a.data);
    cfg.paths.out = display(&a.out);

    let raw = smgd::read(&a.data).with_context(|| format!("reading {}", a.data.display()))?;
    let cube = prepare_cube(&raw, &cfg)?;
    let (samples, dates) = predictor_windows(&cube, cfg.data.t_in, cfg.data.lag)?;
    let lo = a.start.map_or(i64::MIN, days_from_date);
    let hi = a.end.map_or(i64::MAX, days_from_date);
    let keep: Vec<usize> = (0..dates.len()).filter(|&i| (lo..=hi).contains(&dates[i])).collect();
    ensure!(!keep.is_empty(), "no forecast dates fall in the requested range");
    let picked: Vec<Tensor<f32>> = keep.iter().map(|&i| samples.outer(i)).collect::<Result<_, _>>()?;
    let samples = ps.apply(&Tensor::stack(&picked)?)?;
    let pred = last_step(&train::predict(&ck.params, &samples)?)?;
    let (n, h, w) = (pred.shape()[0], pred.shape()[1], pred.shape()[2]);
    let pred = pred.reshape(&[n, h, w, 1])?;
    let axis: Vec<i64> = keep.iter().map(|&i| dates[i]).collect();
    let name = if ck.target_name.is_empty() { "prediction".to_string() } else { ck.target_name.clone() };

    let normalized = DatasetCube::new(pred.clone(), axis.clone(), vec![name.clone()], vec!["1".into()], cube.bbox)?;
    let denorm = DatasetCube::new(ts.inverse(&pred)?, axis, vec![name], vec![ck.target_unit.clone()], cube.bbox)?;

    let dir = a.out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    create_dir(dir)?;
    smgd::write(&a.out, &normalized)?;
    let twin = denorm_path(&a.out);
    smgd::write(&twin, &denorm)?;
    ensure!(smgd::read(&a.out)? == normalized && smgd::read(&twin)? == denorm, "prediction cubes failed to read back");
    cfg.echo(dir)?;
    Ok((normalized, denorm))
}

// ---------------------------------------------------------------- report

#[derive(Debug, Clone, Default)]
pub struct ReportArgs {
    pub history: PathBuf,
    pub ssim: PathBuf,
    /// `(lat_idx, lon_idx)` of the cell for the point series.
    pub point: Option<(usize, usize)>,
    pub pred: Option<PathBuf>,
    pub target: Option<PathBuf>,
    pub config: Option<PathBuf>,
    pub out: PathBuf,
}

/// Figure-data CSVs: the loss curve (a column projection of the history),
/// SSIM over time, and optionally the actual-vs-predicted series at a cell.
pub fn report(a: &ReportArgs) -> Result<()> {
    let mut cfg = load_config(a.config.as_deref())?;
    cfg.paths.out = display(&a.out);
    create_dir(&a.out)?;
    cfg.echo(&a.out)?;

    let history = csv::read(&a.history, csv::HISTORY_HEADER)?;
    let curve: Vec<String> = history.iter().map(|r| r[..5].join(",")).collect();
    csv::write(&a.out.join(LOSS_CURVE_FILE), csv::LOSS_CURVE_HEADER, &curve)?;

    let ssim = csv::read(&a.ssim, csv::SSIM_HEADER)?;
    for r in &ssim {
        r[0].parse::<usize>().with_context(|| format!("bad timestep index {:?}", r[0]))?;
        NaiveDate::parse_from_str(&r[1], "%Y-%m-%d").with_context(|| format!("bad date {:?}", r[1]))?;
        r[2].parse::<f64>().with_context(|| format!("bad ssim {:?}", r[2]))?;
    }
    let rows: Vec<String> = ssim.iter().map(|r| r.join(",")).collect();
    csv::write(&a.out.join(SSIM_OVER_TIME_FILE), csv::SSIM_HEADER, &rows)?;

    let Some((lat, lon)) = a.point else {
        ensure!(a.pred.is_none() && a.target.is_none(), "--pred and --target need --point");
        return Ok(());
    };
    let pred_path = a.pred.as_ref().ok_or_else(|| anyhow!("--point needs --pred"))?;
    let target_path = a.target.as_ref().ok_or_else(|| anyhow!("--point needs --target"))?;
    let pred = smgd::read(pred_path)?;
    let target = smgd::read(target_path)?;
    let rows = point_series(&pred, &target, lat, lon)?;
    csv::write(&a.out.join(POINT_FILE), csv::POINT_HEADER, &rows)?;
    Ok(())
}

/// One row per prediction frame whose date the target cube also holds.
pub fn point_series(pred: &DatasetCube, target: &DatasetCube, lat: usize, lon: usize) -> Result<Vec<String>> {
    let [_, h, w, _] = pred.dims();
    ensure!(lat < h && lon < w, "point ({lat},{lon}) outside the {h}x{w} grid");
    let [_, th, tw, _] = target.dims();
    ensure!((th, tw) == (h, w), "target grid {th}x{tw} differs from prediction grid {h}x{w}");
    let cell = lat * w + lon;
    let mut rows = Vec::new();
    for (k, &day) in pred.time_axis.iter().enumerate() {
        let Some(ti) = target.time_axis.iter().position(|&d| d == day) else { continue };
        let actual = target.values.outer_slice(ti)[cell * target.dims()[3]];
        let predicted = pred.values.outer_slice(k)[cell * pred.dims()[3]];
        rows.push(format!("{k},{},{actual},{predicted}", csv::date(day)?));
    }
    Ok(rows)
}

/// Applies `SMOGCAST_THREADS` (unset or 0 leaves the pool at its default).
pub fn init_threads() -> Result<()> {
    let n = match std::env::var("SMOGCAST_THREADS") {
        Ok(v) => v.trim().parse::<usize>().with_context(|| format!("SMOGCAST_THREADS={v:?} is not a count"))?,
        Err(_) => 0,
    };
    if n > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}
