use std::fs;
use std::io::Write;
use std::path::Path;

use super::{Chunk, SegmentError};

/// Chunk interchange: one JSON record per line with `chunk_id, doc_id,
/// index, start, end, method, generated_text, text`.
pub fn write_chunks(path: &Path, chunks: &[Chunk]) -> Result<(), SegmentError> {
    let err = |e: std::io::Error| SegmentError::ChunkFile {
        path: path.display().to_string(),
        line: 0,
        message: e.to_string(),
    };
    let mut buf = Vec::new();
    for c in chunks {
        serde_json::to_writer(&mut buf, c).expect("chunk serializes");
        buf.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(err)?;
    f.write_all(&buf).map_err(err)
}

pub fn read_chunks(path: &Path) -> Result<Vec<Chunk>, SegmentError> {
    let body = fs::read_to_string(path).map_err(|e| SegmentError::ChunkFile {
        path: path.display().to_string(),
        line: 0,
        message: e.to_string(),
    })?;
    body.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|e| SegmentError::ChunkFile {
                path: path.display().to_string(),
                line: n + 1,
                message: e.to_string(),
            })
        })
        .collect()
}
