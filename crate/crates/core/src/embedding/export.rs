//! Binary embedding dumps for external plotting tools.
//!
//! Layout: `u32` little-endian header length, a JSON header
//! `{dim, count, tags}`, then `count * dim` little-endian `f32` values.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::index::{EmbeddingTag, EmbeddingVector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportTag {
    pub tag: EmbeddingTag,
    pub class_id: u32,
    pub object_id: u32,
    pub view_id: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportHeader {
    pub dim: usize,
    pub count: usize,
    pub tags: Vec<ExportTag>,
}

pub fn encode_embeddings(vectors: &[EmbeddingVector]) -> Result<Vec<u8>> {
    let dim = vectors.first().map_or(0, |v| v.values.len());
    if vectors.iter().any(|v| v.values.len() != dim) {
        return Err(Error::domain("embeddings differ in dimension"));
    }
    let header = ExportHeader {
        dim,
        count: vectors.len(),
        tags: vectors
            .iter()
            .map(|v| ExportTag {
                tag: v.tag,
                class_id: v.class_id,
                object_id: v.object_id,
                view_id: v.view_id,
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let len = u32::try_from(json.len()).map_err(|_| Error::Format("header too large".into()))?;
    let mut out = Vec::with_capacity(4 + json.len() + 4 * dim * vectors.len());
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(&json);
    for v in vectors {
        for &x in &v.values {
            out.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_embeddings(bytes: &[u8]) -> Result<Vec<EmbeddingVector>> {
    let fmt = |m: &str| Error::Format(format!("embedding dump: {m}"));
    let len_bytes: [u8; 4] = bytes.get(..4).ok_or_else(|| fmt("truncated"))?.try_into().unwrap();
    let hlen = u32::from_le_bytes(len_bytes) as usize;
    let json = bytes.get(4..4 + hlen).ok_or_else(|| fmt("truncated header"))?;
    let header: ExportHeader = serde_json::from_slice(json)?;
    if header.tags.len() != header.count {
        return Err(fmt("tag count differs from count"));
    }
    let body = &bytes[4 + hlen..];
    if body.len() != 4 * header.dim * header.count {
        return Err(fmt("payload length does not match header"));
    }
    let mut floats = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64);
    Ok(header
        .tags
        .into_iter()
        .map(|t| EmbeddingVector {
            values: floats.by_ref().take(header.dim).collect(),
            tag: t.tag,
            class_id: t.class_id,
            object_id: t.object_id,
            view_id: t.view_id,
        })
        .collect())
}

pub fn write_embeddings(path: &Path, vectors: &[EmbeddingVector]) -> Result<()> {
    let bytes = encode_embeddings(vectors)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_embeddings(path: &Path) -> Result<Vec<EmbeddingVector>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_embeddings(&bytes)
}
