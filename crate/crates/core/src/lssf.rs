//! LSSF container: persisted structural-similarity maps.
//!
//! Layout (little-endian):
//!   magic "LSSF" | version u8 | channels u8 | height u32 | width u32 |
//!   channels * height * width f32 values, channel-major.
//!
//! Values are stored as 32-bit floats regardless of the compute precision.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::lss::LssMap;
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"LSSF";
pub const VERSION: u8 = 1;
const HEADER_LEN: usize = 14;

pub fn write_lssf<S: Scalar>(path: &Path, map: &LssMap<S>) -> Result<()> {
    let (h, w) = (map.height, map.width);
    let mut out = Vec::with_capacity(HEADER_LEN + 12 * h * w);
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(3);
    out.extend_from_slice(&(h as u32).to_le_bytes());
    out.extend_from_slice(&(w as u32).to_le_bytes());
    for channel in [&map.mean, &map.max, &map.std] {
        for &v in channel.iter() {
            out.extend_from_slice(&(v.to_f64() as f32).to_le_bytes());
        }
    }
    fs::write(path, &out).map_err(|e| Error::io(path, e))
}

pub fn read_lssf(path: &Path) -> Result<LssMap<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < HEADER_LEN {
        return Err(Error::parse(path, bytes.len(), "truncated header"));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::parse(path, 0, "bad magic, expected LSSF"));
    }
    if bytes[4] != VERSION {
        return Err(Error::parse(
            path,
            4,
            format!("unsupported version {}", bytes[4]),
        ));
    }
    let channels = bytes[5] as usize;
    if channels != 3 {
        return Err(Error::parse(
            path,
            5,
            format!("expected 3 channels, found {channels}"),
        ));
    }
    let h = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let w = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
    let expected = HEADER_LEN + channels * h * w * 4;
    if bytes.len() != expected {
        return Err(Error::parse(
            path,
            bytes.len().min(expected),
            format!(
                "payload length mismatch: declared {}x{}x{} needs {} bytes, file has {}",
                channels,
                h,
                w,
                expected,
                bytes.len()
            ),
        ));
    }
    let mut planes: Vec<Vec<f32>> = Vec::with_capacity(3);
    let mut pos = HEADER_LEN;
    for _ in 0..3 {
        let mut plane = Vec::with_capacity(h * w);
        for _ in 0..h * w {
            plane.push(f32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()));
            pos += 4;
        }
        planes.push(plane);
    }
    let std = planes.pop().unwrap();
    let max = planes.pop().unwrap();
    let mean = planes.pop().unwrap();
    Ok(LssMap {
        height: h,
        width: w,
        mean,
        max,
        std,
    })
}
