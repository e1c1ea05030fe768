//! Exact (brute-force) cosine retrieval over chunk vectors, plus MaxP
//! document aggregation and TREC run files.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{dot, EmbeddingVector};

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("dimension mismatch: index has {index}, vector has {got}")]
    Dims { index: usize, got: usize },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("run file line {line}: {message}")]
    RunFile { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    InDocument,
    InCorpus,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::InDocument => "in_document",
            Task::InCorpus => "in_corpus",
        }
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "in_document" => Ok(Task::InDocument),
            "in_corpus" => Ok(Task::InCorpus),
            _ => Err(format!("unknown task `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub chunk_id: String,
    pub doc_id: String,
    pub vector: EmbeddingVector,
}

/// Immutable after construction.
#[derive(Debug, Clone, Default)]
pub struct ChunkIndex {
    dims: usize,
    entries: Vec<IndexEntry>,
    by_doc: HashMap<String, Vec<usize>>,
}

impl ChunkIndex {
    pub fn build(dims: usize, entries: Vec<IndexEntry>) -> Result<Self, RetrievalError> {
        let mut by_doc: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, e) in entries.iter().enumerate() {
            if e.vector.dims() != dims {
                return Err(RetrievalError::Dims { index: dims, got: e.vector.dims() });
            }
            by_doc.entry(e.doc_id.clone()).or_default().push(i);
        }
        Ok(ChunkIndex { dims, entries, by_doc })
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    /// Cosine score of every (optionally scoped) chunk, in index order.
    pub fn score_all(
        &self,
        query: &EmbeddingVector,
        scope_doc_id: Option<&str>,
    ) -> Result<Vec<ScoredChunk<'_>>, RetrievalError> {
        if query.dims() != self.dims {
            return Err(RetrievalError::Dims { index: self.dims, got: query.dims() });
        }
        let score = |i: usize| {
            let e = &self.entries[i];
            ScoredChunk { chunk_id: &e.chunk_id, doc_id: &e.doc_id, score: dot(&query.values, &e.vector.values) }
        };
        Ok(match scope_doc_id {
            Some(doc) => self.by_doc.get(doc).map(|ix| ix.iter().map(|&i| score(i)).collect()).unwrap_or_default(),
            None => (0..self.entries.len()).map(score).collect(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredChunk<'a> {
    pub chunk_id: &'a str,
    pub doc_id: &'a str,
    pub score: f64,
}

/// Higher score first; ties by ascending id.
pub fn rank_order(a_score: f64, a_id: &str, b_score: f64, b_id: &str) -> Ordering {
    b_score.total_cmp(&a_score).then_with(|| a_id.cmp(b_id))
}

fn top_k<T>(mut items: Vec<T>, k: usize, cmp: impl Fn(&T, &T) -> Ordering) -> Vec<T> {
    if items.len() > k {
        items.select_nth_unstable_by(k - 1, &cmp);
        items.truncate(k);
    }
    items.sort_by(&cmp);
    items
}

/// Top-`k` chunks by cosine similarity, optionally within one document.
pub fn search_chunks<'a>(
    query: &EmbeddingVector,
    index: &'a ChunkIndex,
    k: usize,
    scope_doc_id: Option<&str>,
) -> Result<Vec<ScoredChunk<'a>>, RetrievalError> {
    if k == 0 {
        return Err(RetrievalError::ZeroK);
    }
    let scored = index.score_all(query, scope_doc_id)?;
    Ok(top_k(scored, k, |a, b| rank_order(a.score, a.chunk_id, b.score, b.chunk_id)))
}

/// MaxP: a document scores its best chunk. Sorted by score, then doc id.
pub fn maxp_aggregate(scored: &[ScoredChunk<'_>]) -> Vec<(String, f64)> {
    let mut best: HashMap<&str, f64> = HashMap::new();
    for s in scored {
        best.entry(s.doc_id).and_modify(|b| *b = b.max(s.score)).or_insert(s.score);
    }
    let mut docs: Vec<(String, f64)> = best.into_iter().map(|(d, s)| (d.to_owned(), s)).collect();
    docs.sort_by(|a, b| rank_order(a.1, &a.0, b.1, &b.0));
    docs
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedUnit {
    pub unit_id: String,
    pub score: f64,
    pub rank: usize,
}

#[derive(Debug, Clone)]
pub struct QueryVector {
    pub query_id: String,
    pub scope_doc_id: Option<String>,
    pub vector: EmbeddingVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub task: Task,
    pub k: usize,
    pub run_tag: String,
    pub per_query: BTreeMap<String, Vec<RankedUnit>>,
    /// In-document queries without a scope document.
    pub skipped: Vec<String>,
}

fn ranked(units: impl IntoIterator<Item = (String, f64)>) -> Vec<RankedUnit> {
    units.into_iter().enumerate().map(|(i, (unit_id, score))| RankedUnit { unit_id, score, rank: i + 1 }).collect()
}

/// Runs every query. In-document: top-`k` chunks of the scope document.
/// In-corpus: every chunk scored, MaxP, top-`k` documents.
pub fn run_task(
    queries: &[QueryVector],
    index: &ChunkIndex,
    task: Task,
    k: usize,
    run_tag: &str,
) -> Result<RunResult, RetrievalError> {
    if k == 0 {
        return Err(RetrievalError::ZeroK);
    }
    let results: Vec<(String, Option<Vec<RankedUnit>>)> = queries
        .par_iter()
        .map(|q| {
            let units = match task {
                Task::InDocument => match &q.scope_doc_id {
                    None => None,
                    Some(doc) => Some(ranked(
                        search_chunks(&q.vector, index, k, Some(doc))?
                            .into_iter()
                            .map(|s| (s.chunk_id.to_owned(), s.score)),
                    )),
                },
                Task::InCorpus => {
                    let scored = index.score_all(&q.vector, None)?;
                    let mut docs = maxp_aggregate(&scored);
                    docs.truncate(k);
                    Some(ranked(docs))
                }
            };
            Ok((q.query_id.clone(), units))
        })
        .collect::<Result<_, RetrievalError>>()?;

    let mut run = RunResult { task, k, run_tag: run_tag.to_owned(), per_query: BTreeMap::new(), skipped: Vec::new() };
    for (qid, units) in results {
        match units {
            Some(u) => {
                run.per_query.insert(qid, u);
            }
            None => run.skipped.push(qid),
        }
    }
    run.skipped.sort();
    Ok(run)
}

impl RunResult {
    /// `query_id Q0 unit_id rank score run_tag`, tab-separated, queries in
    /// lexicographic order.
    pub fn to_trec(&self) -> String {
        let mut out = String::new();
        for (qid, units) in &self.per_query {
            for u in units {
                writeln!(out, "{qid}\tQ0\t{}\t{}\t{:.6}\t{}", u.unit_id, u.rank, u.score, self.run_tag).unwrap();
            }
        }
        out
    }

    pub fn from_trec(text: &str, task: Task, k: usize) -> Result<RunResult, RetrievalError> {
        let mut per_query: BTreeMap<String, Vec<RankedUnit>> = BTreeMap::new();
        let mut run_tag = String::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split_whitespace().collect();
            let err = |message: String| RetrievalError::RunFile { line: n + 1, message };
            let [qid, _q0, unit, rank, score, tag] = cols.as_slice() else {
                return Err(err(format!("expected 6 columns, got {}", cols.len())));
            };
            let rank: usize = rank.parse().map_err(|_| err(format!("bad rank `{rank}`")))?;
            let score: f64 = score.parse().map_err(|_| err(format!("bad score `{score}`")))?;
            run_tag = tag.to_string();
            per_query.entry(qid.to_string()).or_default().push(RankedUnit { unit_id: unit.to_string(), score, rank });
        }
        for units in per_query.values_mut() {
            units.sort_by_key(|u| u.rank);
        }
        Ok(RunResult { task, k, run_tag, per_query, skipped: Vec::new() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> EmbeddingVector {
        EmbeddingVector::normalized_from(x)
    }

    fn entry(c: &str, d: &str, x: &[f64]) -> IndexEntry {
        IndexEntry { chunk_id: c.into(), doc_id: d.into(), vector: v(x) }
    }

    #[test]
    fn exact_match_ranks_first() {
        let idx = ChunkIndex::build(2, vec![entry("a", "d1", &[1.0, 0.0]), entry("b", "d1", &[0.6, 0.8])]).unwrap();
        let r = search_chunks(&v(&[0.6, 0.8]), &idx, 10, None).unwrap();
        assert_eq!(r[0].chunk_id, "b");
        assert!((r[0].score - 1.0).abs() < 1e-6);
    }

    #[test]
    fn ties_break_by_id() {
        let idx = ChunkIndex::build(2, vec![entry("z", "d1", &[1.0, 0.0]), entry("m", "d2", &[1.0, 0.0])]).unwrap();
        let r = search_chunks(&v(&[1.0, 1.0]), &idx, 10, None).unwrap();
        assert_eq!(r.iter().map(|s| s.chunk_id).collect::<Vec<_>>(), ["m", "z"]);
        assert_eq!(r[0].score, r[1].score);
    }

    #[test]
    fn scoping_and_errors() {
        let idx = ChunkIndex::build(2, vec![entry("a", "d1", &[1.0, 0.0]), entry("b", "d2", &[0.0, 1.0])]).unwrap();
        let r = search_chunks(&v(&[1.0, 0.0]), &idx, 5, Some("d2")).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].chunk_id, "b");
        assert!(search_chunks(&v(&[1.0, 0.0]), &idx, 5, Some("nope")).unwrap().is_empty());
        assert!(matches!(search_chunks(&v(&[1.0, 0.0]), &idx, 0, None), Err(RetrievalError::ZeroK)));
        assert!(matches!(search_chunks(&v(&[1.0, 0.0, 0.0]), &idx, 1, None), Err(RetrievalError::Dims { .. })));
        assert!(ChunkIndex::build(3, vec![entry("a", "d1", &[1.0, 0.0])]).is_err());
    }

    #[test]
    fn maxp_takes_best_chunk() {
        let s = |c: &'static str, d: &'static str, score: f64| ScoredChunk { chunk_id: c, doc_id: d, score };
        let docs = maxp_aggregate(&[s("a", "x", 0.2), s("b", "x", 0.9), s("c", "x", 0.5)]);
        assert_eq!(docs, [("x".to_owned(), 0.9)]);
        let docs = maxp_aggregate(&[s("a", "y", 0.4), s("b", "x", 0.4)]);
        assert_eq!(docs.iter().map(|d| d.0.as_str()).collect::<Vec<_>>(), ["x", "y"]);
    }

    #[test]
    fn run_tasks() {
        let idx = ChunkIndex::build(
            2,
            vec![
                entry("a#0", "a", &[1.0, 0.0]),
                entry("a#1", "a", &[0.0, 1.0]),
                entry("b#0", "b", &[0.7, 0.7]),
                entry("c#0", "c", &[-1.0, 0.0]),
            ],
        )
        .unwrap();
        let qs = vec![
            QueryVector { query_id: "q1".into(), scope_doc_id: Some("a".into()), vector: v(&[0.1, 1.0]) },
            QueryVector { query_id: "q2".into(), scope_doc_id: None, vector: v(&[1.0, 0.0]) },
        ];
        let doc_run = run_task(&qs, &idx, Task::InDocument, 10, "t").unwrap();
        assert_eq!(doc_run.per_query["q1"].iter().map(|u| u.unit_id.as_str()).collect::<Vec<_>>(), ["a#1", "a#0"]);
        assert_eq!(doc_run.skipped, ["q2"]);

        let corpus_run = run_task(&qs, &idx, Task::InCorpus, 10, "t").unwrap();
        let ranked: Vec<&str> = corpus_run.per_query["q2"].iter().map(|u| u.unit_id.as_str()).collect();
        assert_eq!(ranked, ["a", "b", "c"]);
        assert_eq!(corpus_run.per_query["q2"].iter().map(|u| u.rank).collect::<Vec<_>>(), [1, 2, 3]);

        let text = corpus_run.to_trec();
        assert!(text.starts_with("q1\tQ0\t"));
        let back = RunResult::from_trec(&text, Task::InCorpus, 10).unwrap();
        assert_eq!(back.to_trec(), text);
        assert!(RunResult::from_trec("q1 Q0 a 1 0.5\n", Task::InCorpus, 10).is_err());
    }
}
