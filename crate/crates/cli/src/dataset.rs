//! Spike-count dataset files.
//!
//! Text: a header line `T N bin_ms`, then `T` rows of `N` whitespace-separated
//! counts. Binary (little-endian): magic `NGLM`, version `u16`, `T` as `u64`,
//! `N` as `u32`, `bin_ms` as `f64`, then `T * N` `u32` counts, row-major.
//! Readers detect the format from the magic bytes.

use std::path::Path;

use netglm_core::SpikeData;
use sha2::{Digest, Sha256};

use crate::config::DataFormat;
use crate::error::{CliError, CliResult};

pub const MAGIC: &[u8; 4] = b"NGLM";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 8 + 4 + 8;

pub fn encode_binary(data: &SpikeData) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * data.counts().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(data.bins() as u64).to_le_bytes());
    out.extend_from_slice(&(data.neurons() as u32).to_le_bytes());
    out.extend_from_slice(&data.bin_ms().to_le_bytes());
    for c in data.counts() {
        out.extend_from_slice(&c.to_le_bytes());
    }
    out
}

pub fn decode_binary(bytes: &[u8]) -> Result<SpikeData, String> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err("not an NGLM binary dataset".into());
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(format!("unsupported dataset version {version}"));
    }
    let bins = u64::from_le_bytes(bytes[6..14].try_into().unwrap());
    let neurons = u32::from_le_bytes(bytes[14..18].try_into().unwrap()) as u64;
    let bin_ms = f64::from_le_bytes(bytes[18..26].try_into().unwrap());
    let body = &bytes[HEADER_LEN..];
    let expected = bins.checked_mul(neurons).and_then(|c| c.checked_mul(4));
    if expected != Some(body.len() as u64) {
        return Err(format!("header declares {bins} x {neurons} counts but the body has {} bytes", body.len()));
    }
    let counts = body.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect();
    SpikeData::new(bins as usize, neurons as usize, bin_ms, counts).map_err(|e| e.to_string())
}

pub fn encode_text(data: &SpikeData) -> String {
    let mut out = format!("{} {} {}\n", data.bins(), data.neurons(), data.bin_ms());
    for t in 0..data.bins() {
        let row: Vec<String> = data.row(t).iter().map(|c| c.to_string()).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

pub fn decode_text(text: &str) -> Result<SpikeData, String> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or("empty dataset")?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let bad_header = || format!("line 1: expected header `T N bin_ms`, got `{header}`");
    if fields.len() != 3 {
        return Err(bad_header());
    }
    let bins: usize = fields[0].parse().map_err(|_| bad_header())?;
    let neurons: usize = fields[1].parse().map_err(|_| bad_header())?;
    let bin_ms: f64 = fields[2].parse().map_err(|_| bad_header())?;
    let mut counts = Vec::with_capacity(bins * neurons);
    let mut rows = 0;
    for (i, line) in lines {
        let before = counts.len();
        for tok in line.split_whitespace() {
            let c: u32 = tok.parse().map_err(|_| format!("line {}: `{tok}` is not a non-negative count", i + 1))?;
            counts.push(c);
        }
        if counts.len() - before != neurons {
            return Err(format!("line {}: expected {neurons} counts, got {}", i + 1, counts.len() - before));
        }
        rows += 1;
    }
    if rows != bins {
        return Err(format!("header declares {bins} rows but the file has {rows}"));
    }
    SpikeData::new(bins, neurons, bin_ms, counts).map_err(|e| e.to_string())
}

pub fn encode(data: &SpikeData, format: DataFormat) -> Vec<u8> {
    match format {
        DataFormat::Binary => encode_binary(data),
        DataFormat::Text => encode_text(data).into_bytes(),
    }
}

pub fn decode(bytes: &[u8]) -> Result<SpikeData, String> {
    if bytes.starts_with(MAGIC) {
        decode_binary(bytes)
    } else {
        let text = std::str::from_utf8(bytes).map_err(|_| "neither an NGLM binary nor a UTF-8 text dataset")?;
        decode_text(text)
    }
}

pub fn read(path: &Path) -> CliResult<SpikeData> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode(&bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Write the dataset and return the SHA-256 of the file contents.
pub fn write(path: &Path, data: &SpikeData, format: DataFormat) -> CliResult<String> {
    let bytes = encode(data, format);
    std::fs::write(path, &bytes).map_err(|e| CliError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}
