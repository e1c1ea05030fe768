//! On-disk store: one JSON-lines file per entity kind plus `manifest.json`
//! carrying counts and a content hash over the entity files.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    Collection, CollectionKind, CorpusError, Document, GroundTruthSpan, IngestReport, Qrels, Query, Unevaluable,
};

pub const MANIFEST_FILE: &str = "manifest.json";
const DOCUMENTS: &str = "documents.jsonl";
const QUERIES: &str = "queries.jsonl";
const QRELS: &str = "qrels.jsonl";
const GT_SPANS: &str = "gt_spans.jsonl";
const UNEVALUABLE: &str = "unevaluable.jsonl";
const FILES: [&str; 5] = [DOCUMENTS, QUERIES, QRELS, GT_SPANS, UNEVALUABLE];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: CollectionKind,
    pub report: IngestReport,
    pub content_hash: String,
}

#[derive(Serialize, Deserialize)]
struct QrelRow {
    query_id: String,
    doc_id: String,
    grade: u32,
}

fn to_jsonl<T: Serialize>(items: impl IntoIterator<Item = T>) -> Vec<u8> {
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, &item).expect("store records serialize");
        buf.push(b'\n');
    }
    buf
}

fn from_jsonl<T: DeserializeOwned>(dir: &Path, name: &str) -> Result<Vec<T>, CorpusError> {
    let path = dir.join(name);
    let body = fs::read_to_string(&path).map_err(|e| CorpusError::io(&path, e))?;
    body.lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|e| CorpusError::Malformed {
                path: path.clone(),
                line: n + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

fn content_hash(parts: &[(&str, &[u8])]) -> String {
    let mut h = Sha256::new();
    for (name, body) in parts {
        h.update(name.as_bytes());
        h.update((body.len() as u64).to_le_bytes());
        h.update(body);
    }
    hex::encode(h.finalize())
}

impl Collection {
    /// Writes the store into `dir` (created if needed). Same collection,
    /// same bytes.
    pub fn persist(&self, dir: &Path) -> Result<Manifest, CorpusError> {
        fs::create_dir_all(dir).map_err(|e| CorpusError::io(dir, e))?;
        let qrels = self.qrels.entries.iter().flat_map(|(q, docs)| {
            docs.iter().map(move |(d, g)| QrelRow { query_id: q.clone(), doc_id: d.clone(), grade: *g })
        });
        let bodies = [
            to_jsonl(&self.documents),
            to_jsonl(&self.queries),
            to_jsonl(qrels),
            to_jsonl(&self.gt_spans),
            to_jsonl(&self.unevaluable),
        ];
        let parts: Vec<(&str, &[u8])> = FILES.iter().copied().zip(bodies.iter().map(Vec::as_slice)).collect();
        let mut report = self.report.clone();
        report.warnings.clear();
        let manifest = Manifest { kind: self.kind, report, content_hash: content_hash(&parts) };
        for (name, body) in &parts {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| CorpusError::io(&path, e))?;
        }
        let path = dir.join(MANIFEST_FILE);
        let mut f = fs::File::create(&path).map_err(|e| CorpusError::io(&path, e))?;
        serde_json::to_writer_pretty(&mut f, &manifest).expect("manifest serializes");
        f.write_all(b"\n").map_err(|e| CorpusError::io(&path, e))?;
        Ok(manifest)
    }

    /// Loads a persisted store and verifies its content hash.
    pub fn load(dir: &Path) -> Result<Collection, CorpusError> {
        let path = dir.join(MANIFEST_FILE);
        let body = fs::read(&path).map_err(|e| CorpusError::io(&path, e))?;
        let manifest: Manifest =
            serde_json::from_slice(&body).map_err(|e| CorpusError::Store(dir.to_owned(), e.to_string()))?;
        let raw: Vec<Vec<u8>> = FILES
            .iter()
            .map(|f| fs::read(dir.join(f)).map_err(|e| CorpusError::io(dir.join(f), e)))
            .collect::<Result<_, _>>()?;
        let parts: Vec<(&str, &[u8])> = FILES.iter().copied().zip(raw.iter().map(Vec::as_slice)).collect();
        let actual = content_hash(&parts);
        if actual != manifest.content_hash {
            return Err(CorpusError::Store(
                dir.to_owned(),
                format!("content hash mismatch: manifest {} vs files {actual}", manifest.content_hash),
            ));
        }
        let documents: Vec<Document> = from_jsonl(dir, DOCUMENTS)?;
        let queries: Vec<Query> = from_jsonl(dir, QUERIES)?;
        let mut qrels = Qrels::default();
        for row in from_jsonl::<QrelRow>(dir, QRELS)? {
            qrels.insert(&row.query_id, &row.doc_id, row.grade);
        }
        let gt_spans: Vec<GroundTruthSpan> = from_jsonl(dir, GT_SPANS)?;
        let unevaluable: Vec<Unevaluable> = from_jsonl(dir, UNEVALUABLE)?;
        Ok(Collection {
            kind: manifest.kind,
            documents,
            queries,
            qrels,
            gt_spans,
            unevaluable,
            report: manifest.report,
        })
    }
}
