//! Datasets: BEIR-style in-corpus collections and GutenQA-style
//! book + question collections, normalized into one [`Collection`] shape.

mod beir;
mod gutenqa;
mod normalize;
mod store;

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::span::Span;

pub use beir::{ingest_beir, BeirOptions};
pub use gutenqa::{ingest_gutenqa, GtMode, GutenQaOptions};
pub use normalize::{normalize_bytes, normalize_text};
pub use store::{Manifest, MANIFEST_FILE};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("invalid UTF-8 at byte offset {offset}")]
    InvalidUtf8 { offset: usize },
    #[error("{path}:{line}: {message}")]
    Malformed { path: PathBuf, line: usize, message: String },
    #[error("duplicate {kind} id `{id}` ({path}:{line})")]
    Duplicate { kind: &'static str, id: String, path: PathBuf, line: usize },
    #[error("store at {0} is missing or corrupt: {1}")]
    Store(PathBuf, String),
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CorpusError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CorpusError::Io { path: path.into(), source }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    #[serde(default)]
    pub title: String,
    pub text: String,
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub query_id: String,
    pub text: String,
    /// The one document an in-document query targets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scope_doc_id: Option<String>,
}

/// Graded relevance judgments: query id -> doc id -> grade.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Qrels {
    pub entries: BTreeMap<String, BTreeMap<String, u32>>,
}

impl Qrels {
    pub fn insert(&mut self, query_id: &str, doc_id: &str, grade: u32) {
        self.entries.entry(query_id.to_owned()).or_default().insert(doc_id.to_owned(), grade);
    }

    pub fn grade(&self, query_id: &str, doc_id: &str) -> u32 {
        self.entries.get(query_id).and_then(|m| m.get(doc_id)).copied().unwrap_or(0)
    }

    pub fn for_query(&self, query_id: &str) -> Option<&BTreeMap<String, u32>> {
        self.entries.get(query_id)
    }

    /// Number of (query, doc) judgments.
    pub fn len(&self) -> usize {
        self.entries.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Ground-truth paragraph location for an in-document query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthSpan {
    pub query_id: String,
    pub doc_id: String,
    pub char_span: Span,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_paragraph_index: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollectionKind {
    Beir,
    Gutenqa,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Unevaluable {
    pub query_id: String,
    pub reason: String,
}

/// What ingestion kept, dropped, and skipped.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub documents: usize,
    pub queries: usize,
    pub qrels: usize,
    pub gt_spans: usize,
    pub dropped_empty_documents: usize,
    pub skipped_qrels: usize,
    pub unevaluable_queries: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl IngestReport {
    pub fn counts(&self) -> (usize, usize, usize) {
        (self.documents, self.queries, self.qrels)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Collection {
    pub kind: CollectionKind,
    pub documents: Vec<Document>,
    pub queries: Vec<Query>,
    pub qrels: Qrels,
    pub gt_spans: Vec<GroundTruthSpan>,
    pub unevaluable: Vec<Unevaluable>,
    pub report: IngestReport,
}

impl Collection {
    pub fn document(&self, doc_id: &str) -> Option<&Document> {
        self.documents.iter().find(|d| d.doc_id == doc_id)
    }

    pub fn doc_index(&self) -> HashMap<&str, &Document> {
        self.documents.iter().map(|d| (d.doc_id.as_str(), d)).collect()
    }

    /// Ground-truth spans grouped by query id.
    pub fn gt_by_query(&self) -> HashMap<&str, Vec<&GroundTruthSpan>> {
        let mut out: HashMap<&str, Vec<&GroundTruthSpan>> = HashMap::new();
        for gt in &self.gt_spans {
            out.entry(gt.query_id.as_str()).or_default().push(gt);
        }
        out
    }

    pub fn is_evaluable(&self, query_id: &str) -> bool {
        !self.unevaluable.iter().any(|u| u.query_id == query_id)
    }

    pub(crate) fn refresh_report(&mut self) {
        self.report.documents = self.documents.len();
        self.report.queries = self.queries.len();
        self.report.qrels = self.qrels.len();
        self.report.gt_spans = self.gt_spans.len();
        self.report.unevaluable_queries = self.unevaluable.len();
    }
}
