//! Checkpoint layout: `u64` little-endian header length, a JSON header naming every
//! tensor and its shape (in name order), then the tensors' values as little-endian
//! `f64`, concatenated in header order.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sot3d_core::nn::{ParamStore, Tensor};
use sot3d_core::tracker::TrackerConfig;

use crate::error::{read_bytes, write_bytes, LabError, Result};

const FORMAT: &str = "sot3d-checkpoint";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrackerConfig,
    pub params: ParamStore,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    version: u32,
    seed: u64,
    config: TrackerConfig,
    config_sha256: String,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of the canonical JSON form of a config.
pub fn config_hash(cfg: &TrackerConfig) -> String {
    sha256_hex(&serde_json::to_vec(cfg).expect("config serializes"))
}

pub fn encode_checkpoint(ck: &Checkpoint) -> Vec<u8> {
    let header = Header {
        format: FORMAT.into(),
        version: VERSION,
        seed: ck.params.seed(),
        config: ck.config.clone(),
        config_sha256: config_hash(&ck.config),
        tensors: ck
            .params
            .iter()
            .map(|(name, t)| TensorEntry { name: name.to_string(), shape: t.shape().to_vec() })
            .collect(),
    };
    let head = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(8 + head.len() + ck.params.num_values() * 8);
    out.extend_from_slice(&(head.len() as u64).to_le_bytes());
    out.extend_from_slice(&head);
    for (_, t) in ck.params.iter() {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<Checkpoint> {
    let bad = |m: String| LabError::format(path, m);
    if bytes.len() < 8 {
        return Err(bad("truncated checkpoint header".into()));
    }
    let hlen = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes")) as usize;
    let body = &bytes[8..];
    if hlen > body.len() {
        return Err(bad(format!("header length {hlen} exceeds file size")));
    }
    let header: Header = serde_json::from_slice(&body[..hlen]).map_err(|e| bad(format!("header: {e}")))?;
    if header.format != FORMAT || header.version != VERSION {
        return Err(bad(format!("unsupported checkpoint {} v{}", header.format, header.version)));
    }
    if header.config_sha256 != config_hash(&header.config) {
        return Err(bad("config hash does not match the embedded config".into()));
    }
    let mut payload = &body[hlen..];
    let mut params = ParamStore::new(header.seed);
    for entry in &header.tensors {
        let n: usize = entry.shape.iter().product();
        if payload.len() < n * 8 {
            return Err(bad(format!("payload ends inside tensor {}", entry.name)));
        }
        let (chunk, rest) = payload.split_at(n * 8);
        payload = rest;
        let data: Vec<f64> = chunk
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        if !data.iter().all(|v| v.is_finite()) {
            return Err(bad(format!("tensor {} holds non-finite values", entry.name)));
        }
        let t = Tensor::new(entry.shape.clone(), data).map_err(|e| bad(e.to_string()))?;
        params.insert(&entry.name, t).map_err(|e| bad(e.to_string()))?;
    }
    if !payload.is_empty() {
        return Err(bad(format!("{} trailing bytes after the last tensor", payload.len())));
    }
    header.config.validate().map_err(|e| bad(e.to_string()))?;
    Ok(Checkpoint { config: header.config, params })
}

pub fn write_checkpoint(ck: &Checkpoint, path: &Path) -> Result<()> {
    write_bytes(path, &encode_checkpoint(ck))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    decode_checkpoint(&read_bytes(path)?, path)
}
