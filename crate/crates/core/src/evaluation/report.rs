use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::metrics::{dcg_at_k, ndcg_at_k, overlap_relevance};
use super::stats::{paired_t_test, SignificanceResult};
use crate::corpus::{GroundTruthSpan, Qrels, Query};
use crate::retrieval::{RunResult, Task};
use crate::segmentation::Chunk;
use crate::span::Span;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metric_name: String,
    pub run_tag: String,
    pub per_query: BTreeMap<String, f64>,
    /// Mean over evaluated queries; 0 when nothing was evaluated.
    pub aggregate: f64,
    pub n_evaluated: usize,
    pub n_skipped: usize,
    pub skipped: Vec<String>,
}

impl EvalReport {
    fn finish(metric_name: String, run_tag: &str, per_query: BTreeMap<String, f64>, mut skipped: Vec<String>) -> Self {
        skipped.sort();
        skipped.dedup();
        let n = per_query.len();
        let aggregate = if n == 0 { 0.0 } else { per_query.values().sum::<f64>() / n as f64 };
        EvalReport {
            metric_name,
            run_tag: run_tag.to_owned(),
            per_query,
            aggregate,
            n_evaluated: n,
            n_skipped: skipped.len(),
            skipped,
        }
    }

    /// Per-query values of the queries both reports evaluated, aligned by id.
    pub fn paired_with(&self, other: &EvalReport) -> (Vec<f64>, Vec<f64>) {
        self.per_query.iter().filter_map(|(q, &a)| other.per_query.get(q).map(|&b| (a, b))).unzip()
    }
}

/// DCG@k with binary overlap relevance. Queries without ground truth are
/// skipped; a query with ground truth but no ranking scores 0.
pub fn evaluate_in_document(
    run: &RunResult,
    queries: &[Query],
    chunks: &[Chunk],
    gt_spans: &[GroundTruthSpan],
    k: usize,
) -> EvalReport {
    let spans: HashMap<&str, (&str, Span)> =
        chunks.iter().map(|c| (c.chunk_id.as_str(), (c.doc_id.as_str(), c.char_span))).collect();
    let mut gt: HashMap<&str, Vec<&GroundTruthSpan>> = HashMap::new();
    for g in gt_spans {
        gt.entry(g.query_id.as_str()).or_default().push(g);
    }
    let mut per_query = BTreeMap::new();
    let mut skipped = run.skipped.clone();
    for q in queries {
        let Some(truth) = gt.get(q.query_id.as_str()) else {
            skipped.push(q.query_id.clone());
            continue;
        };
        if run.skipped.contains(&q.query_id) {
            continue;
        }
        let rels: Vec<u32> = run
            .per_query
            .get(&q.query_id)
            .map(|units| {
                units
                    .iter()
                    .map(|u| match spans.get(u.unit_id.as_str()) {
                        Some(&(doc, span)) => {
                            let same_doc: Vec<Span> =
                                truth.iter().filter(|g| g.doc_id == doc).map(|g| g.char_span).collect();
                            overlap_relevance(span, &same_doc)
                        }
                        None => 0,
                    })
                    .collect()
            })
            .unwrap_or_default();
        per_query.insert(q.query_id.clone(), dcg_at_k(&rels, k));
    }
    EvalReport::finish(format!("dcg@{k}"), &run.run_tag, per_query, skipped)
}

/// nDCG@k of the document ranking against graded qrels. Queries whose
/// ideal DCG is zero are skipped.
pub fn evaluate_in_corpus(run: &RunResult, queries: &[Query], qrels: &Qrels, k: usize) -> EvalReport {
    let mut per_query = BTreeMap::new();
    let mut skipped = Vec::new();
    for q in queries {
        let judged: Vec<u32> = qrels.for_query(&q.query_id).map(|m| m.values().copied().collect()).unwrap_or_default();
        let ranked: Vec<u32> = run
            .per_query
            .get(&q.query_id)
            .map(|units| units.iter().map(|u| qrels.grade(&q.query_id, &u.unit_id)).collect())
            .unwrap_or_default();
        match ndcg_at_k(&ranked, &judged, k) {
            Some(v) => {
                per_query.insert(q.query_id.clone(), v);
            }
            None => skipped.push(q.query_id.clone()),
        }
    }
    EvalReport::finish(format!("ndcg@{k}"), &run.run_tag, per_query, skipped)
}

/// Dispatches on the run's task.
pub fn evaluate(
    run: &RunResult,
    queries: &[Query],
    chunks: &[Chunk],
    gt_spans: &[GroundTruthSpan],
    qrels: &Qrels,
    k: usize,
) -> EvalReport {
    match run.task {
        Task::InDocument => evaluate_in_document(run, queries, chunks, gt_spans, k),
        Task::InCorpus => evaluate_in_corpus(run, queries, qrels, k),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeChange {
    pub baseline: f64,
    pub treatment: f64,
    /// `(treatment - baseline) / baseline * 100`; `None` when the baseline is 0.
    pub percent: Option<f64>,
    pub significance: Option<SignificanceResult>,
}

impl RelativeChange {
    pub fn is_significant(&self, alpha: f64) -> bool {
        self.significance.is_some_and(|s| s.is_significant(alpha))
    }
}

/// Relative change from `baseline` to `treatment` with a paired t-test over
/// the queries both evaluated.
pub fn relative_change(baseline: &EvalReport, treatment: &EvalReport) -> RelativeChange {
    let (b, t) = baseline.paired_with(treatment);
    let percent =
        (baseline.aggregate != 0.0).then(|| (treatment.aggregate - baseline.aggregate) / baseline.aggregate * 100.0);
    RelativeChange {
        baseline: baseline.aggregate,
        treatment: treatment.aggregate,
        percent,
        significance: paired_t_test(&t, &b).ok(),
    }
}

#[derive(Serialize)]
struct PerQueryRecord<'a> {
    run_tag: &'a str,
    metric: &'a str,
    query_id: &'a str,
    value: f64,
}

/// One JSON object per evaluated query, in query id order.
pub fn per_query_jsonl(report: &EvalReport) -> String {
    let mut out = String::new();
    for (query_id, &value) in &report.per_query {
        let rec = PerQueryRecord { run_tag: &report.run_tag, metric: &report.metric_name, query_id, value };
        out.push_str(&serde_json::to_string(&rec).expect("plain record serializes"));
        out.push('\n');
    }
    out
}
