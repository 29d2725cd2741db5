//! Checkpoint container: `IHCK`, a little-endian u64 header length, a JSON
//! header, then the f32 payload of every named array in header order. The
//! header carries the SHA-256 of the payload.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use hsicolor_autograd::{Module, Param, Tensor};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"IHCK";
const VERSION: u32 = 1;

pub type Arrays = BTreeMap<String, Tensor<f32>>;

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    meta: serde_json::Value,
    arrays: Vec<(String, Vec<usize>)>,
    sha256: String,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn encode_checkpoint(meta: serde_json::Value, arrays: &Arrays) -> Vec<u8> {
    let mut payload = Vec::new();
    for t in arrays.values() {
        for v in t.data() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    let header = Header {
        version: VERSION,
        meta,
        arrays: arrays.iter().map(|(k, t)| (k.clone(), t.shape().to_vec())).collect(),
        sha256: hex(&Sha256::digest(&payload)),
    };
    let json = serde_json::to_vec(&header).expect("header serialises");
    let mut out = Vec::with_capacity(12 + json.len() + payload.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&payload);
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(serde_json::Value, Arrays)> {
    let bad = |d: String| Error::format("checkpoint", d);
    if bytes.len() < 12 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(bad("missing IHCK magic".into()));
    }
    let hlen = u64::from_le_bytes(bytes[4..12].try_into().unwrap()) as usize;
    let body = &bytes[12..];
    if hlen > body.len() {
        return Err(bad(format!("header length {hlen} exceeds file")));
    }
    let header: Header = serde_json::from_slice(&body[..hlen]).map_err(|e| bad(e.to_string()))?;
    if header.version != VERSION {
        return Err(bad(format!("unsupported version {}", header.version)));
    }
    let payload = &body[hlen..];
    if hex(&Sha256::digest(payload)) != header.sha256 {
        return Err(bad("payload checksum mismatch".into()));
    }
    let mut arrays = Arrays::new();
    let mut at = 0;
    for (name, shape) in header.arrays {
        let n: usize = shape.iter().product();
        let end = at + 4 * n;
        if end > payload.len() {
            return Err(bad(format!("payload too short for {name}")));
        }
        let data = payload[at..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        arrays.insert(name, Tensor::from_vec(&shape, data));
        at = end;
    }
    if at != payload.len() {
        return Err(bad(format!("{} trailing payload bytes", payload.len() - at)));
    }
    Ok((header.meta, arrays))
}

/// Writes to a sibling temporary file, then renames over `path`.
pub fn write_checkpoint(path: impl AsRef<Path>, meta: serde_json::Value, arrays: &Arrays) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension("ckpt.tmp");
    fs::write(&tmp, encode_checkpoint(meta, arrays)).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<(serde_json::Value, Arrays)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

/// Copies every parameter of `m` into `arrays` under `prefix.name`.
pub fn store_module<M: Module<f32> + ?Sized>(m: &M, prefix: &str, arrays: &mut Arrays) {
    m.visit_params(prefix, &mut |name, p| {
        arrays.insert(name.to_string(), p.value().clone());
    });
}

/// Loads every parameter of `m` from `arrays`; missing names or shape
/// mismatches are errors.
pub fn load_module<M: Module<f32> + ?Sized>(m: &mut M, prefix: &str, arrays: &Arrays) -> Result<()> {
    let mut err = None;
    m.visit_params_mut(prefix, &mut |name, p: &mut Param<f32>| {
        if err.is_some() {
            return;
        }
        match arrays.get(name) {
            Some(t) if t.shape() == p.shape() => p.set(t.clone()),
            Some(t) => err = Some(format!("{name}: stored shape {:?}, model expects {:?}", t.shape(), p.shape())),
            None => err = Some(format!("{name} is missing")),
        }
    });
    err.map_or(Ok(()), |e| Err(Error::format("checkpoint", e)))
}
