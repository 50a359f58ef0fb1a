//! On-disk formats for models, datasets and zoo manifests.
//!
//! Model and dataset files share one container layout:
//!
//! ```text
//! magic       8 bytes   b"GGMODEL\0" or b"GGDATA\0\0"
//! header_len  u32 LE
//! header      header_len bytes of UTF-8 JSON
//! payload     little-endian tensor blob
//! checksum    u64 LE, 64-bit FNV-1a of the payload
//! ```
//!
//! The header declares `format_version`, `payload_bytes` and, per tensor,
//! a byte `offset` and an element count `len`. See `docs/formats.md`.

mod dataset;
mod manifest;
mod model;

pub use dataset::{decode_dataset, encode_dataset, load_dataset, save_dataset};
pub use manifest::{load_zoo_models, write_zoo, LoadedModel, ManifestEntry, ZooManifest};
pub use model::{decode_model, encode_model, load_model, save_model};

use std::hash::Hasher;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

pub(crate) const MODEL_MAGIC: &[u8; 8] = b"GGMODEL\0";
pub(crate) const DATASET_MAGIC: &[u8; 8] = b"GGDATA\0\0";

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

/// Location of one tensor inside the payload: byte offset and element count
/// (4-byte elements).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorRef {
    pub offset: usize,
    pub len: usize,
}

impl TensorRef {
    fn end(&self) -> Option<usize> {
        self.len.checked_mul(4)?.checked_add(self.offset)
    }
}

/// Appends 4-byte little-endian elements and hands out their locations.
#[derive(Default)]
pub(crate) struct PayloadWriter {
    bytes: Vec<u8>,
}

impl PayloadWriter {
    pub fn push_f32(&mut self, values: impl ExactSizeIterator<Item = f32>) -> TensorRef {
        let r = TensorRef {
            offset: self.bytes.len(),
            len: values.len(),
        };
        for v in values {
            self.bytes.extend_from_slice(&v.to_le_bytes());
        }
        r
    }

    pub fn push_u32(&mut self, values: impl ExactSizeIterator<Item = u32>) -> TensorRef {
        let r = TensorRef {
            offset: self.bytes.len(),
            len: values.len(),
        };
        for v in values {
            self.bytes.extend_from_slice(&v.to_le_bytes());
        }
        r
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }
}

pub(crate) fn encode_container(magic: &[u8; 8], header: &Value, payload: &[u8]) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(header)?;
    let header_len =
        u32::try_from(header.len()).map_err(|_| Error::Format("header longer than 4 GiB".into()))?;
    let mut out = Vec::with_capacity(8 + 4 + header.len() + payload.len() + 8);
    out.extend_from_slice(magic);
    out.extend_from_slice(&header_len.to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(payload);
    out.extend_from_slice(&fnv1a(payload).to_le_bytes());
    Ok(out)
}

/// Splits a container into its JSON header and checksum-verified payload.
/// The header's version and payload size are checked before anything else.
pub(crate) fn decode_container<'a>(magic: &[u8; 8], bytes: &'a [u8]) -> Result<(Value, &'a [u8])> {
    if bytes.len() < 12 || &bytes[..8] != magic {
        return Err(Error::Format(format!(
            "missing magic {:?}",
            String::from_utf8_lossy(magic).trim_end_matches('\0')
        )));
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = &bytes[12..];
    if body.len() < header_len {
        return Err(Error::Format("truncated header".into()));
    }
    let header: Value = serde_json::from_slice(&body[..header_len])?;
    let version = header
        .get("format_version")
        .and_then(Value::as_u64)
        .ok_or_else(|| Error::Format("header lacks format_version".into()))?;
    if version != FORMAT_VERSION as u64 {
        return Err(Error::VersionMismatch {
            found: u32::try_from(version).unwrap_or(u32::MAX),
            expected: FORMAT_VERSION,
        });
    }
    let payload_bytes = header
        .get("payload_bytes")
        .and_then(Value::as_u64)
        .ok_or_else(|| Error::Format("header lacks payload_bytes".into()))? as usize;
    let rest = &body[header_len..];
    if rest.len() != payload_bytes.saturating_add(8) || payload_bytes > rest.len() {
        return Err(Error::Format(format!(
            "expected {} payload bytes plus an 8-byte checksum, found {} bytes",
            payload_bytes,
            rest.len()
        )));
    }
    let (payload, tail) = rest.split_at(payload_bytes);
    let expected = u64::from_le_bytes(tail.try_into().unwrap());
    let found = fnv1a(payload);
    if expected != found {
        return Err(Error::ChecksumMismatch { expected, found });
    }
    Ok((header, payload))
}

/// Checks that every tensor is 4-byte aligned, inside the payload and
/// disjoint from every other tensor.
pub(crate) fn validate_layout(refs: &[(String, TensorRef)], payload_len: usize) -> Result<()> {
    let mut spans = Vec::with_capacity(refs.len());
    for (name, r) in refs {
        let end = r
            .end()
            .filter(|&e| e <= payload_len)
            .ok_or_else(|| Error::Format(format!("tensor {name} exceeds the {payload_len}-byte payload")))?;
        if r.offset % 4 != 0 {
            return Err(Error::Format(format!("tensor {name} offset {} is not 4-byte aligned", r.offset)));
        }
        if r.len > 0 {
            spans.push((r.offset, end, name));
        }
    }
    spans.sort();
    for w in spans.windows(2) {
        if w[1].0 < w[0].1 {
            return Err(Error::Format(format!("tensors {} and {} overlap", w[0].2, w[1].2)));
        }
    }
    Ok(())
}

pub(crate) fn read_f32(payload: &[u8], r: TensorRef) -> Vec<f32> {
    payload[r.offset..r.offset + 4 * r.len]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect()
}

pub(crate) fn read_u32(payload: &[u8], r: TensorRef) -> Vec<u32> {
    payload[r.offset..r.offset + 4 * r.len]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect()
}
