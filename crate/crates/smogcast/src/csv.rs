//! The CSV artifacts. Floats use Rust's shortest round-trip formatting and
//! dates are `YYYY-MM-DD`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use smogcast_core::data::date_from_days;
use smogcast_core::train::EpochRecord;

pub const HISTORY_HEADER: &str = "epoch,train_loss,val_loss,train_mse,val_mse,lr,plateau,stopped_early";
pub const METRICS_HEADER: &str = "epochs,loss,mse,avg_ssim";
pub const SSIM_HEADER: &str = "timestep_index,date,ssim";
pub const LOSS_CURVE_HEADER: &str = "epoch,train_loss,val_loss,train_mse,val_mse";
pub const POINT_HEADER: &str = "timestep_index,date,actual,predicted";

pub fn date(days: i64) -> Result<String> {
    Ok(date_from_days(days)?.to_string())
}

pub fn history_row(r: &EpochRecord) -> String {
    format!(
        "{},{},{},{},{},{},{},{}",
        r.epoch, r.train_loss, r.val_loss, r.train_mse, r.val_mse, r.lr, r.plateau_triggered, r.stopped_early
    )
}

/// Appends rows one at a time and flushes each, so an aborted run leaves
/// every completed row on disk.
pub struct RowWriter {
    out: BufWriter<File>,
}

impl RowWriter {
    pub fn create(path: &Path, header: &str) -> Result<Self> {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        let mut w = RowWriter { out: BufWriter::new(file) };
        w.row(header)?;
        Ok(w)
    }

    pub fn row(&mut self, line: &str) -> Result<()> {
        writeln!(self.out, "{line}")?;
        self.out.flush()?;
        Ok(())
    }
}

pub fn write(path: &Path, header: &str, rows: &[String]) -> Result<()> {
    let mut w = RowWriter::create(path, header)?;
    for r in rows {
        w.row(r)?;
    }
    Ok(())
}

/// Reads a CSV whose header must equal `header`; returns the data rows split
/// into fields, each with the header's column count.
pub fn read(path: &Path, header: &str) -> Result<Vec<Vec<String>>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut lines = BufReader::new(file).lines();
    let first = lines.next().transpose()?.unwrap_or_default();
    if first != header {
        bail!("{}: expected header {header:?}, found {first:?}", path.display());
    }
    let cols = header.split(',').count();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let fields: Vec<String> = line.split(',').map(str::to_string).collect();
        if fields.len() != cols {
            bail!("{} line {}: {} fields, expected {cols}", path.display(), i + 2, fields.len());
        }
        rows.push(fields);
    }
    Ok(rows)
}
