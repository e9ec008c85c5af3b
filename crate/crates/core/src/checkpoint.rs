//! Checkpoint container.
//!
//! Layout: magic "LSCK" | version u8 | header_len u32 LE | UTF-8 header |
//! raw little-endian f32 parameter payload.
//!
//! The header is the effective run configuration (config-file syntax,
//! echoed verbatim) followed by a `[manifest]` section with one line per
//! parameter: `name dims... offset`, offsets counted in f32 elements from
//! the payload start. Values are stored as f32 regardless of the compute
//! precision.

use std::fs;
use std::path::Path;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::net::Network;
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"LSCK";
pub const VERSION: u8 = 1;

pub fn save<S: Scalar>(path: &Path, net: &Network<S>, config_echo: &str) -> Result<()> {
    let mut manifest = String::from("[manifest]\n");
    let mut offset = 0usize;
    for entry in &net.store.entries {
        let dims: Vec<String> = entry.shape.iter().map(|d| d.to_string()).collect();
        manifest.push_str(&format!("{} {} {}\n", entry.name, dims.join(","), offset));
        offset += entry.data.len();
    }
    let header = format!("{config_echo}\n{manifest}");
    let header_bytes = header.as_bytes();
    let mut out = Vec::with_capacity(9 + header_bytes.len() + offset * 4);
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(header_bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(header_bytes);
    for entry in &net.store.entries {
        for &v in &entry.data {
            out.extend_from_slice(&(v.to_f64() as f32).to_le_bytes());
        }
    }
    fs::write(path, &out).map_err(|e| Error::io(path, e))
}

/// Reconstruct a network from a checkpoint. The embedded config echo is
/// returned alongside.
pub fn load<S: Scalar>(path: &Path) -> Result<(Network<S>, RunConfig)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 9 {
        return Err(Error::parse(path, bytes.len(), "truncated checkpoint"));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::parse(path, 0, "bad magic, expected LSCK"));
    }
    if bytes[4] != VERSION {
        return Err(Error::parse(
            path,
            4,
            format!("unsupported checkpoint version {}", bytes[4]),
        ));
    }
    let header_len = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    if bytes.len() < 9 + header_len {
        return Err(Error::parse(path, bytes.len(), "truncated header"));
    }
    let header = std::str::from_utf8(&bytes[9..9 + header_len])
        .map_err(|_| Error::parse(path, 9, "header is not UTF-8"))?;
    let (config_text, manifest_text) = header
        .split_once("[manifest]")
        .ok_or_else(|| Error::parse(path, 9, "missing [manifest] section"))?;
    let run_config = RunConfig::parse(config_text)
        .map_err(|e| Error::parse(path, 9, format!("bad embedded config: {e}")))?;

    let mut net: Network<S> = Network::new(run_config.network_config())?;
    let payload = &bytes[9 + header_len..];
    if payload.len() % 4 != 0 {
        return Err(Error::parse(path, bytes.len(), "payload not f32-aligned"));
    }
    let total_floats = payload.len() / 4;

    let mut seen = 0usize;
    for line in manifest_text.lines().filter(|l| !l.trim().is_empty()) {
        let mut parts = line.split_whitespace();
        let (name, dims, offset) = match (parts.next(), parts.next(), parts.next()) {
            (Some(n), Some(d), Some(o)) => (n, d, o),
            _ => return Err(Error::parse(path, 9, format!("bad manifest line: {line}"))),
        };
        let shape: Vec<usize> = dims
            .split(',')
            .map(|d| d.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::parse(path, 9, format!("bad dims in manifest: {line}")))?;
        let offset: usize = offset
            .parse()
            .map_err(|_| Error::parse(path, 9, format!("bad offset in manifest: {line}")))?;
        let idx = net.store.index_of(name).ok_or_else(|| {
            Error::parse(path, 9, format!("unknown parameter {name} in manifest"))
        })?;
        let entry = &mut net.store.entries[idx];
        if entry.shape != shape {
            return Err(Error::parse(
                path,
                9,
                format!(
                    "parameter {name}: shape {:?} in file vs {:?} in architecture",
                    shape, entry.shape
                ),
            ));
        }
        let numel = entry.data.len();
        if offset + numel > total_floats {
            return Err(Error::parse(
                path,
                bytes.len(),
                format!("parameter {name} extends past payload"),
            ));
        }
        for i in 0..numel {
            let at = (offset + i) * 4;
            let v = f32::from_le_bytes(payload[at..at + 4].try_into().unwrap());
            entry.data[i] = S::from_f64(v as f64);
        }
        seen += numel;
    }
    if seen != total_floats {
        return Err(Error::parse(
            path,
            bytes.len(),
            format!("manifest covers {seen} floats, payload has {total_floats}"),
        ));
    }
    Ok((net, run_config))
}
