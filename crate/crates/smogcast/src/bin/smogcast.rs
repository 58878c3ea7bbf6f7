use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use chrono::NaiveDate;
use clap::{Parser, Subcommand};

use smogcast::commands::{self, EvalArgs, PredictArgs, ReportArgs, SynthArgs, TrainArgs};

/// Aerosol-index forecasting with a convolutional LSTM.
#[derive(Parser)]
#[command(name = "smogcast", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (h, w) = s.split_once(['x', 'X']).ok_or("expected HxW, e.g. 16x16")?;
    let parse = |v: &str| v.trim().parse::<usize>().ok().filter(|&n| n > 0);
    match (parse(h), parse(w)) {
        (Some(h), Some(w)) => Ok((h, w)),
        _ => Err("grid extents must be positive integers".into()),
    }
}

fn parse_point(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or("expected \"lat_idx,lon_idx\"")?;
    match (a.trim().parse(), b.trim().parse()) {
        (Ok(a), Ok(b)) => Ok((a, b)),
        _ => Err("point indices must be non-negative integers".into()),
    }
}

fn parse_date(s: &str) -> Result<NaiveDate, String> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| format!("expected YYYY-MM-DD: {e}"))
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate synthetic predictor and target cubes.
    Synth {
        #[arg(long, value_parser = parse_grid)]
        grid: Option<(usize, usize)>,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        frames: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model; writes model.smgc and history.csv.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a checkpoint on the test split; writes metrics.csv and ssim.csv.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Forecast every window of a predictor cube.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output SMGD file; the denormalized twin is written beside it.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = parse_date)]
        start: Option<NaiveDate>,
        #[arg(long, value_parser = parse_date)]
        end: Option<NaiveDate>,
    },
    /// Emit figure-data CSVs from training and evaluation outputs.
    Report {
        #[arg(long)]
        history: PathBuf,
        #[arg(long)]
        ssim: PathBuf,
        /// Grid cell as "lat_idx,lon_idx".
        #[arg(long, value_parser = parse_point, requires_all = ["pred", "target"])]
        point: Option<(usize, usize)>,
        /// Prediction cube for the point series.
        #[arg(long, requires = "point")]
        pred: Option<PathBuf>,
        /// Target cube for the point series.
        #[arg(long, requires = "point")]
        target: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cmd: Cmd) -> Result<()> {
    commands::init_threads()?;
    match cmd {
        Cmd::Synth { grid, frames, seed, config, out } => {
            let (p, t) = commands::synth(&SynthArgs { grid, frames: frames.map(|f| f as usize), seed, config, out })?;
            println!("wrote {} and {}", p.display(), t.display());
        }
        Cmd::Train { data, target, config, out } => {
            let ck = commands::train(&TrainArgs { data, target, config, out: out.clone() })?;
            println!("trained {} epochs; outputs in {}", ck.epochs_completed, out.display());
        }
        Cmd::Evaluate { checkpoint, data, target, config, out } => {
            let ev = commands::evaluate(&EvalArgs { checkpoint, data, target, config, out })?;
            println!("epochs={} loss={} mse={} avg_ssim={}", ev.epochs, ev.loss, ev.mse, ev.avg_ssim);
        }
        Cmd::Predict { checkpoint, data, config, out, start, end } => {
            let (n, _) = commands::predict(&PredictArgs { checkpoint, data, config, out: out.clone(), start, end })?;
            println!("wrote {} forecasts to {}", n.frames(), out.display());
        }
        Cmd::Report { history, ssim, point, pred, target, config, out } => {
            commands::report(&ReportArgs { history, ssim, point, pred, target, config, out: out.clone() })?;
            println!("wrote report to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse().cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
