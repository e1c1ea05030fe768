//! Query-level correlation between the size of relevant chunks and
//! retrieval effectiveness.

use std::collections::HashMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::report::EvalReport;
use super::stats::{pearson_r, Correlation};
use crate::corpus::{GroundTruthSpan, Qrels};
use crate::segmentation::Chunk;
use crate::tokenizer::{TokenizeError, Tokenizer};

/// Which chunks count as relevant to a query.
#[derive(Debug, Clone, Copy)]
pub enum Relevance<'a> {
    /// Chunks of every document with a positive grade.
    Qrels(&'a Qrels),
    /// Chunks overlapping a ground-truth span.
    Spans(&'a [GroundTruthSpan]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizePair {
    pub run_tag: String,
    pub query_id: String,
    pub mean_chunk_tokens: f64,
    pub metric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeCorrelation {
    pub pairs: Vec<SizePair>,
    /// `run_tag/query_id` of evaluated queries with no relevant chunk.
    pub excluded: Vec<String>,
    pub correlation: Option<Correlation>,
    pub undefined_reason: Option<String>,
}

impl SizeCorrelation {
    /// `run_tag  query_id  mean_chunk_tokens  metric`, tab-separated with header.
    pub fn scatter_tsv(&self) -> String {
        let mut out = String::from("run_tag\tquery_id\tmean_chunk_tokens\tmetric\n");
        for p in &self.pairs {
            writeln!(out, "{}\t{}\t{:.4}\t{:.6}", p.run_tag, p.query_id, p.mean_chunk_tokens, p.metric).unwrap();
        }
        out
    }
}

fn relevant<'c>(chunks: &'c [Chunk], query_id: &str, relevance: Relevance<'_>) -> Vec<&'c Chunk> {
    match relevance {
        Relevance::Qrels(qrels) => chunks.iter().filter(|c| qrels.grade(query_id, &c.doc_id) > 0).collect(),
        Relevance::Spans(gt) => {
            let truth: Vec<&GroundTruthSpan> = gt.iter().filter(|g| g.query_id == query_id).collect();
            chunks
                .iter()
                .filter(|c| truth.iter().any(|g| g.doc_id == c.doc_id && g.char_span.intersects(&c.char_span)))
                .collect()
        }
    }
}

/// One evaluated run with its chunks and the judgments it was scored on.
#[derive(Debug, Clone, Copy)]
pub struct CorrelationInput<'a> {
    pub report: &'a EvalReport,
    pub chunks: &'a [Chunk],
    pub relevance: Relevance<'a>,
}

/// Pools (mean relevant chunk tokens, metric) pairs over every run of one
/// task and correlates them.
pub fn chunk_size_correlation(
    runs: &[CorrelationInput<'_>],
    tokenizer: &dyn Tokenizer,
) -> Result<SizeCorrelation, TokenizeError> {
    let mut pairs = Vec::new();
    let mut excluded = Vec::new();
    for &CorrelationInput { report, chunks, relevance } in runs {
        let mut sizes: HashMap<&str, usize> = HashMap::new();
        for (query_id, &metric) in &report.per_query {
            let rel = relevant(chunks, query_id, relevance);
            if rel.is_empty() {
                excluded.push(format!("{}/{query_id}", report.run_tag));
                continue;
            }
            let mut total = 0usize;
            for c in &rel {
                total += match sizes.get(c.chunk_id.as_str()) {
                    Some(&n) => n,
                    None => {
                        let n = tokenizer.count_tokens(&c.text)?;
                        sizes.insert(&c.chunk_id, n);
                        n
                    }
                };
            }
            pairs.push(SizePair {
                run_tag: report.run_tag.clone(),
                query_id: query_id.clone(),
                mean_chunk_tokens: total as f64 / rel.len() as f64,
                metric,
            });
        }
    }
    let x: Vec<f64> = pairs.iter().map(|p| p.mean_chunk_tokens).collect();
    let y: Vec<f64> = pairs.iter().map(|p| p.metric).collect();
    let (correlation, undefined_reason) = match pearson_r(&x, &y) {
        Ok(c) => (Some(c), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(SizeCorrelation { pairs, excluded, correlation, undefined_reason })
}
