//! Parameter checkpoints.
//!
//! Layout: an 8-byte little-endian header length `n`, then `n` bytes of
//! UTF-8 JSON, then every parameter's values as little-endian `f64` in
//! header order. The header carries a caller-supplied `model` object and,
//! per parameter, its name, shape, constraint and byte offset into the
//! data section.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{Constraint, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    #[serde(default)]
    pub constraint: Constraint,
}

#[derive(Serialize, Deserialize)]
struct Header {
    model: serde_json::Value,
    params: Vec<ParamRecord>,
}

pub fn write_checkpoint<M: Serialize>(model: &M, params: &ParamStore) -> Result<Vec<u8>> {
    let mut records = Vec::with_capacity(params.len());
    let mut offset = 0;
    for id in params.ids() {
        let value = params.value(id);
        records.push(ParamRecord {
            name: params.name(id).to_string(),
            shape: value.shape().to_vec(),
            offset,
            constraint: params.constraint(id),
        });
        offset += value.len() * 8;
    }
    let header = Header {
        model: serde_json::to_value(model).map_err(|e| Error::json("checkpoint model", e))?,
        params: records,
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::json("checkpoint header", e))?;
    let mut out = Vec::with_capacity(8 + json.len() + offset);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for id in params.ids() {
        for v in params.value(id).data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Parses a checkpoint into its model header and a parameter store in
/// header order.
pub fn read_checkpoint(bytes: &[u8]) -> Result<(serde_json::Value, ParamStore)> {
    let bad = |msg: &str| Error::Data(format!("malformed checkpoint: {msg}"));
    if bytes.len() < 8 {
        return Err(bad("truncated length prefix"));
    }
    let hlen = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes")) as usize;
    let data_start = 8usize
        .checked_add(hlen)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| bad("header length exceeds file size"))?;
    let header: Header = serde_json::from_slice(&bytes[8..data_start])
        .map_err(|e| Error::json("checkpoint header", e))?;
    let data = &bytes[data_start..];
    let mut store = ParamStore::new();
    let mut expected_offset = 0;
    for rec in header.params {
        let n: usize = rec.shape.iter().product();
        if rec.offset != expected_offset {
            return Err(bad(&format!("parameter {} is out of order", rec.name)));
        }
        let end = rec.offset + n * 8;
        if end > data.len() {
            return Err(bad(&format!(
                "parameter {} runs past end of data",
                rec.name
            )));
        }
        let values = data[rec.offset..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        store.register_constrained(rec.name, Tensor::new(rec.shape, values)?, rec.constraint);
        expected_offset = end;
    }
    if expected_offset != data.len() {
        return Err(bad("trailing bytes after parameter data"));
    }
    Ok((header.model, store))
}

pub fn save_checkpoint<M: Serialize>(path: &Path, model: &M, params: &ParamStore) -> Result<()> {
    let bytes = write_checkpoint(model, params)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(serde_json::Value, ParamStore)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&bytes)
}
