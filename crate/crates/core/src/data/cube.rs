use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `(lon_min, lat_min, lon_max, lat_max)` of the northern South Asia study area, WGS84.
pub const STUDY_BBOX: [f64; 4] = [68.137207, 24.886436, 84.836426, 34.379713];

fn epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(1970, 1, 1).expect("valid epoch")
}

pub fn days_from_date(date: NaiveDate) -> i64 {
    (date - epoch()).num_days()
}

pub fn days_from_ymd(year: i32, month: u32, day: u32) -> Result<i64> {
    NaiveDate::from_ymd_opt(year, month, day)
        .map(days_from_date)
        .ok_or_else(|| Error::invalid(format!("invalid date {year:04}-{month:02}-{day:02}")))
}

pub fn date_from_days(days: i64) -> Result<NaiveDate> {
    epoch()
        .checked_add_signed(chrono::TimeDelta::try_days(days).ok_or_else(|| Error::invalid("day offset out of range"))?)
        .ok_or_else(|| Error::invalid("day offset out of range"))
}

/// Time-ordered gridded cube `[T, H, W, C]`. Missing observations are NaN
/// until [`impute`](super::impute) has run.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetCube {
    pub values: Tensor<f32>,
    /// Days since 1970-01-01 UTC, one per frame.
    pub time_axis: Vec<i64>,
    pub feature_names: Vec<String>,
    pub units: Vec<String>,
    pub bbox: [f64; 4],
}

impl DatasetCube {
    pub fn new(
        values: Tensor<f32>,
        time_axis: Vec<i64>,
        feature_names: Vec<String>,
        units: Vec<String>,
        bbox: [f64; 4],
    ) -> Result<Self> {
        let cube = DatasetCube {
            values,
            time_axis,
            feature_names,
            units,
            bbox,
        };
        cube.validate()?;
        Ok(cube)
    }

    pub fn dims(&self) -> [usize; 4] {
        let s = self.values.shape();
        [s[0], s[1], s[2], s[3]]
    }

    pub fn frames(&self) -> usize {
        self.values.shape()[0]
    }

    /// Spacing between frames in days; `None` for a single frame.
    pub fn cadence(&self) -> Option<i64> {
        match self.time_axis.as_slice() {
            [a, b, ..] => Some(b - a),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.rank() != 4 {
            return Err(Error::invalid(format!(
                "cube must be [T,H,W,C], got {:?}",
                self.values.shape()
            )));
        }
        let [t, _, _, c] = self.dims();
        if self.time_axis.len() != t {
            return Err(Error::invalid(format!(
                "time axis has {} entries for {t} frames",
                self.time_axis.len()
            )));
        }
        if self.feature_names.len() != c || self.units.len() != c {
            return Err(Error::invalid(format!(
                "{c} features but {} names and {} units",
                self.feature_names.len(),
                self.units.len()
            )));
        }
        if let Some(step) = self.cadence() {
            if step <= 0 || self.time_axis.windows(2).any(|w| w[1] - w[0] != step) {
                return Err(Error::invalid("time axis must be strictly increasing at a uniform cadence"));
            }
        }
        Ok(())
    }

    /// Errors unless the cadence equals `days` (single-frame cubes pass).
    pub fn require_cadence(&self, days: i64) -> Result<()> {
        match self.cadence() {
            Some(c) if c != days => Err(Error::invalid(format!("cadence is {c} days, expected {days}"))),
            _ => Ok(()),
        }
    }

    pub fn missing_count(&self) -> usize {
        self.values.data().iter().filter(|v| v.is_nan()).count()
    }

    /// Same metadata, different values (same shape).
    pub fn with_values(&self, values: Tensor<f32>) -> Result<Self> {
        values.expect_shape("cube values", self.values.shape())?;
        Ok(DatasetCube {
            values,
            ..self.clone()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn cube(axis: Vec<i64>) -> Result<DatasetCube> {
        let t = axis.len();
        DatasetCube::new(
            Tensor::zeros(&[t, 2, 2, 1]).unwrap(),
            axis,
            vec!["AER_AI".to_string()],
            vec!["1".to_string()],
            STUDY_BBOX,
        )
    }

    #[test]
    fn cadence_validation() {
        assert_eq!(cube(vec![0, 5, 10]).unwrap().cadence(), Some(5));
        assert!(cube(vec![0, 5, 11]).is_err());
        assert!(cube(vec![10, 5, 0]).is_err());
        assert!(cube(vec![0, 5]).unwrap().require_cadence(3).is_err());
    }

    #[test]
    fn day_arithmetic() {
        assert_eq!(days_from_ymd(1970, 1, 2).unwrap(), 1);
        let d = days_from_ymd(2023, 1, 1).unwrap();
        assert_eq!(date_from_days(d).unwrap().to_string(), "2023-01-01");
        assert!(days_from_ymd(2022, 2, 31).is_err());
    }
}
