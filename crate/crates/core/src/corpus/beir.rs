use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::Deserialize;

use super::{normalize_text, Collection, CollectionKind, CorpusError, Document, IngestReport, Qrels, Query};

#[derive(Debug, Clone, Default)]
pub struct BeirOptions {
    /// Prepend `title + "\n"` to the body text when the title is non-empty.
    pub prepend_title: bool,
}

#[derive(Deserialize)]
struct CorpusRecord {
    #[serde(rename = "_id")]
    id: IdValue,
    #[serde(default)]
    title: String,
    text: String,
}

#[derive(Deserialize)]
struct QueryRecord {
    #[serde(rename = "_id")]
    id: IdValue,
    text: String,
}

/// Some BEIR dumps store numeric ids.
#[derive(Deserialize)]
#[serde(untagged)]
enum IdValue {
    Str(String),
    Int(i64),
}

impl IdValue {
    fn into_string(self) -> String {
        match self {
            IdValue::Str(s) => s,
            IdValue::Int(i) => i.to_string(),
        }
    }
}

fn read_lines(path: &Path) -> Result<String, CorpusError> {
    let bytes = fs::read(path).map_err(|e| CorpusError::io(path, e))?;
    super::normalize_bytes(&bytes).map_err(|e| match e {
        CorpusError::InvalidUtf8 { offset } => CorpusError::Malformed {
            path: path.to_owned(),
            line: 1 + bytes[..offset].iter().filter(|&&b| b == b'\n').count(),
            message: format!("invalid UTF-8 at byte offset {offset}"),
        },
        other => other,
    })
}

fn malformed(path: &Path, line: usize, message: impl Into<String>) -> CorpusError {
    CorpusError::Malformed { path: path.to_owned(), line, message: message.into() }
}

/// Loads a BEIR-layout collection: `corpus.jsonl`, `queries.jsonl` and a
/// 3- or 4-column qrels TSV with an optional header.
pub fn ingest_beir(
    corpus_path: &Path,
    queries_path: &Path,
    qrels_path: &Path,
    opts: &BeirOptions,
) -> Result<Collection, CorpusError> {
    let mut report = IngestReport::default();

    let mut documents = Vec::new();
    let mut seen = HashSet::new();
    for (n, line) in read_lines(corpus_path)?.lines().enumerate() {
        let lineno = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CorpusRecord =
            serde_json::from_str(line).map_err(|e| malformed(corpus_path, lineno, e.to_string()))?;
        let doc_id = rec.id.into_string();
        if doc_id.is_empty() {
            return Err(malformed(corpus_path, lineno, "empty _id"));
        }
        if !seen.insert(doc_id.clone()) {
            return Err(CorpusError::Duplicate {
                kind: "document",
                id: doc_id,
                path: corpus_path.to_owned(),
                line: lineno,
            });
        }
        let title = normalize_text(&rec.title);
        let body = normalize_text(&rec.text);
        let text = if opts.prepend_title && !title.trim().is_empty() { format!("{title}\n{body}") } else { body };
        if text.trim().is_empty() {
            report.dropped_empty_documents += 1;
            continue;
        }
        documents.push(Document { doc_id, title, text, meta: Default::default() });
    }

    let mut queries = Vec::new();
    let mut seen_q = HashSet::new();
    for (n, line) in read_lines(queries_path)?.lines().enumerate() {
        let lineno = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: QueryRecord =
            serde_json::from_str(line).map_err(|e| malformed(queries_path, lineno, e.to_string()))?;
        let query_id = rec.id.into_string();
        if query_id.is_empty() {
            return Err(malformed(queries_path, lineno, "empty _id"));
        }
        if !seen_q.insert(query_id.clone()) {
            return Err(CorpusError::Duplicate {
                kind: "query",
                id: query_id,
                path: queries_path.to_owned(),
                line: lineno,
            });
        }
        queries.push(Query { query_id, text: normalize_text(&rec.text), scope_doc_id: None });
    }

    let doc_ids: HashSet<&str> = documents.iter().map(|d| d.doc_id.as_str()).collect();
    let query_ids: HashSet<&str> = queries.iter().map(|q| q.query_id.as_str()).collect();
    let mut qrels = Qrels::default();
    for (n, line) in read_lines(qrels_path)?.lines().enumerate() {
        let lineno = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
        let (qid, did, score) = match cols.as_slice() {
            [q, d, s] => (*q, *d, *s),
            [q, _iter, d, s] => (*q, *d, *s),
            _ => {
                return Err(malformed(
                    qrels_path,
                    lineno,
                    format!("expected 3 or 4 tab-separated columns, got {}", cols.len()),
                ))
            }
        };
        let grade = match score.parse::<i64>() {
            Ok(g) if g >= 0 => g as u32,
            Ok(g) => return Err(malformed(qrels_path, lineno, format!("negative grade {g}"))),
            Err(_) if lineno == 1 => continue, // header
            Err(_) => return Err(malformed(qrels_path, lineno, format!("non-integer score `{score}`"))),
        };
        if !query_ids.contains(qid) || !doc_ids.contains(did) {
            report.skipped_qrels += 1;
            report
                .warnings
                .push(format!("{}:{lineno}: skipping qrel ({qid}, {did}): unknown id", qrels_path.display()));
            continue;
        }
        qrels.insert(qid, did, grade);
    }

    let mut collection = Collection {
        kind: CollectionKind::Beir,
        documents,
        queries,
        qrels,
        gt_spans: Vec::new(),
        unevaluable: Vec::new(),
        report,
    };
    collection.refresh_report();
    Ok(collection)
}
