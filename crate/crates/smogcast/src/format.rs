//! Framing shared by the binary containers: four magic bytes, a `u32`
//! version, a `u32` header length, the UTF-8 header, then a little-endian
//! `f32` payload.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },
    #[error("unsupported version {0}")]
    Version(u32),
    #[error("truncated file: {0}")]
    Truncated(String),
    #[error("{0} trailing bytes after payload")]
    Trailing(usize),
    #[error("malformed header: {0}")]
    Header(String),
    #[error("checksum mismatch: file is corrupt")]
    Checksum,
    #[error("fingerprint mismatch: header says {stored}, contents hash to {computed}")]
    Fingerprint { stored: String, computed: String },
    #[error(transparent)]
    Core(#[from] smogcast_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = FormatError> = std::result::Result<T, E>;

pub const VERSION: u32 = 1;

pub fn frame(magic: &[u8; 4], header: &str, payload: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + header.len() + 4 * payload.len());
    out.extend_from_slice(magic);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for v in payload {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Splits a framed file into header text and raw payload bytes.
pub fn unframe<'a>(magic: &[u8; 4], bytes: &'a [u8]) -> Result<(&'a str, &'a [u8])> {
    if bytes.len() < 12 {
        return Err(FormatError::Truncated(format!("{} bytes is shorter than the preamble", bytes.len())));
    }
    if &bytes[..4] != magic {
        return Err(FormatError::BadMagic {
            expected: String::from_utf8_lossy(magic).into_owned(),
            found: String::from_utf8_lossy(&bytes[..4]).into_owned(),
        });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(FormatError::Version(version));
    }
    let len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let rest = &bytes[12..];
    if rest.len() < len {
        return Err(FormatError::Truncated(format!("header needs {len} bytes, {} remain", rest.len())));
    }
    let header = std::str::from_utf8(&rest[..len]).map_err(|e| FormatError::Header(e.to_string()))?;
    Ok((header, &rest[len..]))
}

/// Decodes exactly `count` values; shorter or longer payloads are errors.
pub fn floats(payload: &[u8], count: usize) -> Result<Vec<f32>> {
    let want = count * 4;
    if payload.len() < want {
        return Err(FormatError::Truncated(format!(
            "payload holds {} bytes, header declares {count} values ({want} bytes)",
            payload.len()
        )));
    }
    if payload.len() > want {
        return Err(FormatError::Trailing(payload.len() - want));
    }
    Ok(payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect())
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_round_trip() {
        let bytes = frame(b"TEST", "k = 1\n", &[1.5, f32::NAN, -0.0]);
        let (h, p) = unframe(b"TEST", &bytes).unwrap();
        assert_eq!(h, "k = 1\n");
        let v = floats(p, 3).unwrap();
        assert_eq!(v[0], 1.5);
        assert!(v[1].is_nan());
        assert_eq!(v[2].to_bits(), (-0.0f32).to_bits());
    }

    #[test]
    fn framing_errors() {
        let bytes = frame(b"TEST", "k = 1\n", &[1.0, 2.0]);
        assert!(matches!(unframe(b"XXXX", &bytes), Err(FormatError::BadMagic { .. })));
        let mut v2 = bytes.clone();
        v2[4] = 2;
        assert!(matches!(unframe(b"TEST", &v2), Err(FormatError::Version(2))));
        assert!(matches!(unframe(b"TEST", &bytes[..14]), Err(FormatError::Truncated(_))));
        let (_, p) = unframe(b"TEST", &bytes).unwrap();
        assert!(matches!(floats(p, 3), Err(FormatError::Truncated(_))));
        assert!(matches!(floats(p, 1), Err(FormatError::Trailing(4))));
    }
}
