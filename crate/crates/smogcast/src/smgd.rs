//! SMGD gridded-cube container.
//!
//! The header is TOML:
//!
//! ```toml
//! dims = [T, H, W, C]
//! feature_names = ["SO2", ...]
//! units = ["mol/m2", ...]
//! time_axis = [17897, 17902, ...]   # days since 1970-01-01
//! bbox = [lon_min, lat_min, lon_max, lat_max]
//! missing = "NaN"
//! ```
//!
//! followed by `T·H·W·C` row-major little-endian `f32` values.

use std::path::Path;

use serde::{Deserialize, Serialize};
use smogcast_core::data::DatasetCube;
use smogcast_core::Tensor;

use crate::format::{floats, frame, unframe, FormatError, Result};

pub const MAGIC: &[u8; 4] = b"SMGD";
const MISSING: &str = "NaN";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    dims: [usize; 4],
    feature_names: Vec<String>,
    units: Vec<String>,
    time_axis: Vec<i64>,
    bbox: [f64; 4],
    missing: String,
}

pub fn encode(cube: &DatasetCube) -> Result<Vec<u8>> {
    cube.validate()?;
    let header = Header {
        dims: cube.dims(),
        feature_names: cube.feature_names.clone(),
        units: cube.units.clone(),
        time_axis: cube.time_axis.clone(),
        bbox: cube.bbox,
        missing: MISSING.into(),
    };
    let text = toml::to_string(&header).map_err(|e| FormatError::Header(e.to_string()))?;
    Ok(frame(MAGIC, &text, cube.values.data()))
}

pub fn decode(bytes: &[u8]) -> Result<DatasetCube> {
    let (text, payload) = unframe(MAGIC, bytes)?;
    let h: Header = toml::from_str(text).map_err(|e| FormatError::Header(e.to_string()))?;
    if h.missing != MISSING {
        return Err(FormatError::Header(format!("missing-value convention {:?} unsupported", h.missing)));
    }
    let count = h
        .dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| FormatError::Header(format!("dims {:?} overflow", h.dims)))?;
    let values = floats(payload, count)?;
    let tensor = Tensor::from_vec(&h.dims, values)?;
    Ok(DatasetCube::new(tensor, h.time_axis, h.feature_names, h.units, h.bbox)?)
}

pub fn write(path: &Path, cube: &DatasetCube) -> Result<()> {
    std::fs::write(path, encode(cube)?)?;
    Ok(())
}

pub fn read(path: &Path) -> Result<DatasetCube> {
    decode(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use smogcast_core::data::STUDY_BBOX;

    fn tiny() -> DatasetCube {
        let v = Tensor::from_vec(&[2, 2, 2, 1], vec![0.5, f32::NAN, -1.0, 3.25, 1e-30, 7.0, -0.0, 2.0]).unwrap();
        DatasetCube::new(v, vec![19_358, 19_363], vec!["AER_AI".into()], vec!["1".into()], STUDY_BBOX).unwrap()
    }

    #[test]
    fn minimal_cube_round_trips_bitwise() {
        let c = tiny();
        let bytes = encode(&c).unwrap();
        let back = decode(&bytes).unwrap();
        let bits = |c: &DatasetCube| c.values.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&c));
        assert_eq!(back.time_axis, c.time_axis);
        assert_eq!(back.bbox, c.bbox);
        assert_eq!(encode(&back).unwrap(), bytes);
    }

    #[test]
    fn declared_frames_beyond_payload_is_truncation() {
        let bytes = encode(&tiny()).unwrap();
        let (text, payload) = unframe(MAGIC, &bytes).unwrap();
        let text = text.replace("dims = [2,", "dims = [3,").replace("time_axis = [19358, 19363]", "time_axis = [19358, 19363, 19368]");
        assert!(text.contains("dims = [3,"), "{text}");
        let mut forged = frame(MAGIC, &text, &[]);
        forged.extend_from_slice(payload);
        assert!(matches!(decode(&forged), Err(FormatError::Truncated(_))));
    }

    #[test]
    fn inconsistent_header_rejected() {
        let bytes = encode(&tiny()).unwrap();
        let (text, payload) = unframe(MAGIC, &bytes).unwrap();
        let mut bad = frame(MAGIC, &text.replace("19363]", "19363, 19368]"), &[]);
        bad.extend_from_slice(payload);
        assert!(matches!(decode(&bad), Err(FormatError::Core(_))));
        let mut bad = frame(MAGIC, &format!("{text}extra = 1\n"), &[]);
        bad.extend_from_slice(payload);
        assert!(matches!(decode(&bad), Err(FormatError::Header(_))));
    }
}
