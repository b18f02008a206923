//! `LQT1` tensor container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic       4 bytes  "LQT1"
//! version     u32      1
//! header_len  u64      byte length of the JSON header
//! header      UTF-8 JSON {"tensors":[{"name","dtype","shape","offset"}, ...]}
//! payload     raw row-major element data; offsets are relative to its start
//! ```
//!
//! Tensors are written back to back in list order, so offsets are ascending
//! and non-overlapping.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"LQT1";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

impl std::str::FromStr for Dtype {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" => Ok(Dtype::F32),
            "f64" => Ok(Dtype::F64),
            other => Err(Error::InvalidParameter(format!("unknown dtype `{other}`"))),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    tensors: Vec<Entry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Entry {
    name: String,
    dtype: Dtype,
    shape: Vec<usize>,
    offset: u64,
}

/// Serializes tensors into an in-memory `LQT1` image.
pub fn encode_tensors<T: Scalar>(tensors: &[Tensor<T>], dtype: Dtype) -> Result<Vec<u8>> {
    let mut entries = Vec::with_capacity(tensors.len());
    let mut payload = Vec::new();
    for (i, t) in tensors.iter().enumerate() {
        entries.push(Entry {
            name: t.name().map_or_else(|| format!("t{i}"), str::to_owned),
            dtype,
            shape: t.shape().to_vec(),
            offset: payload.len() as u64,
        });
        match dtype {
            Dtype::F32 => {
                for v in t.data() {
                    payload.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
                }
            }
            Dtype::F64 => {
                for v in t.data() {
                    payload.extend_from_slice(&v.as_f64().to_le_bytes());
                }
            }
        }
    }
    let header = serde_json::to_vec(&Header { tensors: entries })
        .map_err(|e| Error::HeaderParse(e.to_string()))?;

    let mut out = Vec::with_capacity(16 + header.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&payload);
    Ok(out)
}

/// Parses an `LQT1` image. `f32` payloads are widened losslessly.
pub fn decode_tensors(bytes: &[u8]) -> Result<Vec<Tensor<f64>>> {
    if bytes.len() < 4 {
        let mut found = [0u8; 4];
        found[..bytes.len()].copy_from_slice(bytes);
        return Err(Error::BadMagic(found));
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if &magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }
    if bytes.len() < 16 {
        return Err(Error::HeaderParse("truncated preamble".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::BadVersion(version));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let header_end = 16u64
        .checked_add(header_len)
        .filter(|&end| end <= bytes.len() as u64)
        .ok_or_else(|| Error::HeaderParse("header length exceeds file size".into()))?
        as usize;
    let header: Header = serde_json::from_slice(&bytes[16..header_end])
        .map_err(|e| Error::HeaderParse(e.to_string()))?;
    let payload = &bytes[header_end..];
    let payload_len = payload.len() as u64;

    let mut tensors = Vec::with_capacity(header.tensors.len());
    let mut prev_end = 0u64;
    for entry in header.tensors {
        let count = entry
            .shape
            .iter()
            .try_fold(1u64, |acc, &d| acc.checked_mul(d as u64))
            .ok_or_else(|| Error::HeaderParse(format!("shape of `{}` overflows", entry.name)))?;
        let start = entry.offset;
        let end = count
            .checked_mul(entry.dtype.size() as u64)
            .and_then(|n| n.checked_add(start));
        let end = match end {
            Some(end) if start >= prev_end && end <= payload_len => end,
            _ => {
                return Err(Error::OffsetOutOfBounds {
                    tensor: entry.name,
                    start,
                    end: end.unwrap_or(u64::MAX),
                    payload_len,
                })
            }
        };
        prev_end = end;
        let raw = &payload[start as usize..end as usize];
        let data: Vec<f64> = match entry.dtype {
            Dtype::F32 => raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect(),
            Dtype::F64 => raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        };
        let tensor = Tensor::new(entry.shape, data).map_err(|e| match e {
            Error::NonFiniteValue { index, .. } => Error::NonFiniteValue {
                tensor: entry.name.clone(),
                index,
            },
            other => Error::HeaderParse(format!("tensor `{}`: {other}", entry.name)),
        })?;
        tensors.push(tensor.with_name(entry.name));
    }
    Ok(tensors)
}

pub fn save_tensors<T: Scalar>(tensors: &[Tensor<T>], path: impl AsRef<Path>, dtype: Dtype) -> Result<()> {
    fs::write(path, encode_tensors(tensors, dtype)?)?;
    Ok(())
}

pub fn load_tensors(path: impl AsRef<Path>) -> Result<Vec<Tensor<f64>>> {
    decode_tensors(&fs::read(path)?)
}
