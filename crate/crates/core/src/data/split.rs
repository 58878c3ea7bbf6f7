use alloc::vec::Vec;

use super::cube::days_from_ymd;
use super::normalize::NormStats;
use super::window::WindowedDataset;
use crate::error::{Error, Result};

/// Inclusive train and test date ranges, as days since 1970-01-01.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSpec {
    pub train: (i64, i64),
    pub test: (i64, i64),
}

impl SplitSpec {
    pub fn new(train: (i64, i64), test: (i64, i64)) -> Result<Self> {
        let s = SplitSpec { train, test };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.train.0 > self.train.1 || self.test.0 > self.test.1 {
            return Err(Error::invalid("split range start after end"));
        }
        if self.train.1 >= self.test.0 {
            return Err(Error::invalid("train range must end before the test range starts"));
        }
        Ok(())
    }

    /// Train 2019-01-01 … 2022-12-31, test 2023-01-01 … 2023-12-31.
    pub fn default_years() -> Self {
        let d = |y, m, dd| days_from_ymd(y, m, dd).expect("valid literal date");
        SplitSpec {
            train: (d(2019, 1, 1), d(2022, 12, 31)),
            test: (d(2023, 1, 1), d(2023, 12, 31)),
        }
    }
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self::default_years()
    }
}

fn in_range(day: i64, r: (i64, i64)) -> bool {
    r.0 <= day && day <= r.1
}

/// Assigns windows by target date, without rescaling. Windows outside both
/// ranges are dropped.
pub fn partition(windows: &WindowedDataset, spec: &SplitSpec) -> Result<(WindowedDataset, WindowedDataset)> {
    spec.validate()?;
    let pick = |r| -> Vec<usize> {
        (0..windows.len())
            .filter(|&i| in_range(windows.sample_dates[i], r))
            .collect()
    };
    let (train, test) = (pick(spec.train), pick(spec.test));
    if train.is_empty() {
        return Err(Error::Empty("train split"));
    }
    if test.is_empty() {
        return Err(Error::Empty("test split"));
    }
    Ok((windows.select(&train)?, windows.select(&test)?))
}

/// [`partition`] followed by min-max scaling fitted on the train side only.
pub fn split(windows: &WindowedDataset, spec: &SplitSpec) -> Result<(WindowedDataset, WindowedDataset)> {
    let (train, test) = partition(windows, spec)?;
    let p = NormStats::fit(&train.samples)?;
    let t = NormStats::fit(&train.targets)?;
    Ok((train.normalized(&p, &t)?, test.normalized(&p, &t)?))
}
