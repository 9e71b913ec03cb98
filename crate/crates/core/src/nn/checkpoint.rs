//! Weight checkpoint container.
//!
//! Layout:
//!
//! ```text
//! b"SATTRCKP"             8-byte magic
//! u32 LE                  header length in bytes
//! header (UTF-8 lines)    format=1, arch=<id>, meta.<key>=<value>...,
//!                         tensor=<name>:<d0>x<d1>...:<param|buffer>...,
//!                         layers_digest=<sha256 hex>, payload_digest=<sha256 hex>
//! payload                 little-endian f32 values, tensors in header order
//! ```
//!
//! `layers_digest` covers the architecture id and tensor list only, so a
//! loader can rebuild the network from `meta.*`, recompute the digest and
//! refuse weights that belong to a different layout.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use sha2::{Digest, Sha256};

use super::layers::{Named, TensorKind};
use super::{NnError, Real};

const MAGIC: &[u8; 8] = b"SATTRCKP";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub kind: TensorKind,
}

impl TensorEntry {
    fn line(&self) -> String {
        let dims: Vec<String> = self.shape.iter().map(|d| d.to_string()).collect();
        format!("{}:{}:{}", self.name, dims.join("x"), self.kind.as_str())
    }

    fn parse(s: &str) -> Result<Self, NnError> {
        let mut parts = s.rsplitn(3, ':');
        let kind = match parts.next() {
            Some("param") => TensorKind::Param,
            Some("buffer") => TensorKind::Buffer,
            other => return Err(NnError::Checkpoint(format!("bad tensor kind {other:?}"))),
        };
        let dims = parts.next().ok_or_else(|| NnError::Checkpoint(format!("bad tensor line {s:?}")))?;
        let name = parts.next().ok_or_else(|| NnError::Checkpoint(format!("bad tensor line {s:?}")))?;
        let shape = dims
            .split('x')
            .map(|d| d.parse::<usize>().map_err(|_| NnError::Checkpoint(format!("bad dims {dims:?}"))))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            name: name.to_string(),
            shape,
            kind,
        })
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Digest of an architecture id plus its ordered tensor list.
pub fn layers_digest(arch: &str, entries: &[TensorEntry]) -> String {
    let mut h = Sha256::new();
    h.update(arch.as_bytes());
    for e in entries {
        h.update(b"\n");
        h.update(e.line().as_bytes());
    }
    hex::encode(h.finalize())
}

pub fn entries_of<T: Real>(tensors: &[Named<'_, T>]) -> Vec<TensorEntry> {
    tensors
        .iter()
        .map(|n| TensorEntry {
            name: n.name.clone(),
            shape: n.tensor.shape().to_vec(),
            kind: n.kind,
        })
        .collect()
}

/// A decoded checkpoint, values still in storage precision.
#[derive(Debug, Clone)]
pub struct RawCheckpoint {
    pub arch: String,
    pub meta: BTreeMap<String, String>,
    pub entries: Vec<TensorEntry>,
    pub layers_digest: String,
    pub values: Vec<Vec<f32>>,
}

pub fn write_checkpoint<T: Real, W: Write>(
    mut w: W,
    arch: &str,
    meta: &BTreeMap<String, String>,
    tensors: &[Named<'_, T>],
) -> Result<(), NnError> {
    let entries = entries_of(tensors);
    let mut payload = Vec::with_capacity(tensors.iter().map(|t| t.tensor.len() * 4).sum());
    for t in tensors {
        for v in t.tensor.data() {
            payload.extend_from_slice(&(v.f64() as f32).to_le_bytes());
        }
    }
    let mut header = format!("format={FORMAT_VERSION}\narch={arch}\n");
    for (k, v) in meta {
        if k.contains(['\n', '=']) || v.contains('\n') {
            return Err(NnError::Checkpoint(format!("meta entry {k:?} cannot be encoded")));
        }
        header.push_str(&format!("meta.{k}={v}\n"));
    }
    for e in &entries {
        header.push_str(&format!("tensor={}\n", e.line()));
    }
    header.push_str(&format!("layers_digest={}\n", layers_digest(arch, &entries)));
    header.push_str(&format!("payload_digest={}\n", hex::encode(Sha256::digest(&payload))));
    w.write_all(MAGIC)?;
    w.write_all(&(header.len() as u32).to_le_bytes())?;
    w.write_all(header.as_bytes())?;
    w.write_all(&payload)?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<RawCheckpoint, NnError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| NnError::Checkpoint("file too short for a checkpoint".into()))?;
    if &magic != MAGIC {
        return Err(NnError::Checkpoint("not a synthattr network checkpoint".into()));
    }
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let mut header = vec![0u8; u32::from_le_bytes(len) as usize];
    r.read_exact(&mut header)?;
    let header = String::from_utf8(header).map_err(|_| NnError::Checkpoint("header is not UTF-8".into()))?;
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;

    let mut arch = None;
    let mut meta = BTreeMap::new();
    let mut entries = Vec::new();
    let mut layers = None;
    let mut payload_digest = None;
    for line in header.lines() {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| NnError::Checkpoint(format!("bad header line {line:?}")))?;
        match k {
            "format" => {
                if v.parse::<u32>().ok() != Some(FORMAT_VERSION) {
                    return Err(NnError::Checkpoint(format!("unsupported checkpoint format {v}")));
                }
            }
            "arch" => arch = Some(v.to_string()),
            "tensor" => entries.push(TensorEntry::parse(v)?),
            "layers_digest" => layers = Some(v.to_string()),
            "payload_digest" => payload_digest = Some(v.to_string()),
            _ => {
                if let Some(key) = k.strip_prefix("meta.") {
                    meta.insert(key.to_string(), v.to_string());
                }
            }
        }
    }
    let arch = arch.ok_or_else(|| NnError::Checkpoint("missing arch".into()))?;
    let layers = layers.ok_or_else(|| NnError::Checkpoint("missing layers_digest".into()))?;
    if layers != layers_digest(&arch, &entries) {
        return Err(NnError::Checkpoint("layer list does not match its digest".into()));
    }
    if payload_digest.as_deref() != Some(hex::encode(Sha256::digest(&payload)).as_str()) {
        return Err(NnError::Checkpoint("payload digest mismatch (corrupt file?)".into()));
    }
    let expected: usize = entries.iter().map(|e| e.numel() * 4).sum();
    if expected != payload.len() {
        return Err(NnError::Checkpoint(format!(
            "payload holds {} bytes, layer list needs {expected}",
            payload.len()
        )));
    }
    let mut values = Vec::with_capacity(entries.len());
    let mut off = 0;
    for e in &entries {
        let n = e.numel();
        values.push(
            payload[off..off + 4 * n]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect(),
        );
        off += 4 * n;
    }
    Ok(RawCheckpoint {
        arch,
        meta,
        entries,
        layers_digest: layers,
        values,
    })
}
