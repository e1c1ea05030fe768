//! Embedding artifact: `u32` LE header length, JSON header, then
//! `count * dims` little-endian f32 values, row-major.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EmbedError, EmbeddingVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactHeader {
    pub dims: usize,
    pub count: usize,
    pub backend: super::Backend,
    pub model: String,
    pub lambda: Option<f64>,
    /// `pre` or `contextualized`; absent for query vectors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ordering: Option<String>,
    /// Row ids (chunk ids or query ids), one per vector.
    pub ids: Vec<String>,
}

fn err(path: &Path, message: impl Into<String>) -> EmbedError {
    EmbedError::Artifact { path: path.display().to_string(), message: message.into() }
}

pub fn write_artifact(path: &Path, header: &ArtifactHeader, vectors: &[EmbeddingVector]) -> Result<(), EmbedError> {
    if header.count != vectors.len() || header.ids.len() != vectors.len() {
        return Err(err(path, format!("header count {} vs {} vectors", header.count, vectors.len())));
    }
    let json = serde_json::to_vec(header).expect("header serializes");
    let mut buf = Vec::with_capacity(4 + json.len() + vectors.len() * header.dims * 4);
    buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&json);
    for v in vectors {
        if v.dims() != header.dims {
            return Err(EmbedError::Dims { expected: header.dims, got: v.dims() });
        }
        for x in &v.values {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    fs::write(path, buf).map_err(|e| err(path, e.to_string()))
}

pub fn read_artifact(path: &Path) -> Result<(ArtifactHeader, Vec<EmbeddingVector>), EmbedError> {
    let buf = fs::read(path).map_err(|e| err(path, e.to_string()))?;
    let len = u32::from_le_bytes(buf.get(..4).ok_or_else(|| err(path, "truncated"))?.try_into().unwrap()) as usize;
    let header: ArtifactHeader =
        serde_json::from_slice(buf.get(4..4 + len).ok_or_else(|| err(path, "truncated header"))?)
            .map_err(|e| err(path, e.to_string()))?;
    let body = &buf[4 + len..];
    if body.len() != header.count * header.dims * 4 {
        return Err(err(
            path,
            format!("expected {} float bytes, found {}", header.count * header.dims * 4, body.len()),
        ));
    }
    let vectors = body
        .chunks_exact(header.dims.max(1) * 4)
        .take(header.count)
        .map(|row| {
            let values: Vec<f32> = row.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
            let normalized = values.iter().any(|&x| x != 0.0);
            EmbeddingVector { values, normalized }
        })
        .collect();
    Ok((header, vectors))
}
