//! Single-file model container.
//!
//! ```text
//! magic  b"S3FNETCK"
//! u32 LE format version
//! u64 LE header length
//! header JSON {format_version, spec, spec_hash, params: [{name, kind, shape, dtype, offset, len}]}
//! payload: little-endian f64 values, tensors back to back
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, NetworkSpec};
use crate::error::{Error, Result};
use crate::params::ParamKind;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"S3FNETCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    spec: NetworkSpec,
    spec_hash: String,
    params: Vec<Entry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Entry {
    name: String,
    kind: ParamKind,
    shape: Vec<usize>,
    dtype: String,
    /// Byte offset into the payload.
    offset: usize,
    /// Number of values.
    len: usize,
}

fn integrity(msg: impl Into<String>) -> Error {
    Error::Integrity(msg.into())
}

impl Model {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut entries = Vec::new();
        let mut payload = Vec::new();
        for (name, p) in self.params.iter() {
            entries.push(Entry {
                name: name.to_owned(),
                kind: p.kind,
                shape: p.value.shape().to_vec(),
                dtype: "f64le".into(),
                offset: payload.len(),
                len: p.value.len(),
            });
            for v in p.value.data() {
                payload.extend_from_slice(&v.to_le_bytes());
            }
        }
        let header = serde_json::to_vec(&Header {
            format_version: CHECKPOINT_VERSION,
            spec: self.spec.clone(),
            spec_hash: self.spec.hash(),
            params: entries,
        })?;
        let mut out = Vec::with_capacity(20 + header.len() + payload.len());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&payload);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 20 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(integrity("not a model checkpoint (bad magic)"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(integrity(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let body = &bytes[20..];
        if body.len() < hlen {
            return Err(integrity("checkpoint header is truncated"));
        }
        let header: Header = serde_json::from_slice(&body[..hlen])
            .map_err(|e| integrity(format!("unreadable checkpoint header: {e}")))?;
        if header.format_version != version {
            return Err(integrity("header and preamble versions disagree"));
        }
        if header.spec.hash() != header.spec_hash {
            return Err(integrity("network description does not match its hash"));
        }
        let payload = &body[hlen..];
        let mut model = Model::new(header.spec)?;
        if header.params.len() != model.params.len() {
            return Err(integrity(format!(
                "checkpoint holds {} tensors, the network has {}",
                header.params.len(),
                model.params.len()
            )));
        }
        for e in &header.params {
            if e.dtype != "f64le" {
                return Err(integrity(format!("`{}` has unsupported dtype {}", e.name, e.dtype)));
            }
            let param = model
                .params
                .iter_mut()
                .find(|(n, _)| *n == e.name)
                .map(|(_, p)| p)
                .ok_or_else(|| integrity(format!("unexpected tensor `{}`", e.name)))?;
            if param.value.shape() != e.shape.as_slice() || e.len != param.value.len() {
                return Err(integrity(format!(
                    "`{}` has shape {:?} in the checkpoint, {:?} in the network",
                    e.name,
                    e.shape,
                    param.value.shape()
                )));
            }
            if param.kind != e.kind {
                return Err(integrity(format!("`{}` changed kind", e.name)));
            }
            let end = e.offset + 8 * e.len;
            let raw = payload
                .get(e.offset..end)
                .ok_or_else(|| integrity(format!("payload for `{}` is truncated", e.name)))?;
            for (dst, chunk) in param.value.data_mut().iter_mut().zip(raw.chunks_exact(8)) {
                *dst = f64::from_le_bytes(chunk.try_into().unwrap());
            }
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
