//! Metrics, significance tests and report tables.

mod correlation;
mod metrics;
mod report;
mod stats;
mod tables;

pub use correlation::{chunk_size_correlation, CorrelationInput, Relevance, SizeCorrelation, SizePair};
pub use metrics::{dcg_at_k, ideal_dcg_at_k, ndcg_at_k, overlap_relevance};
pub use report::{
    evaluate, evaluate_in_corpus, evaluate_in_document, per_query_jsonl, relative_change, EvalReport, RelativeChange,
};
pub use stats::{paired_t_test, pearson_r, two_sided_p, Correlation, SignificanceResult, StatsError};
pub use tables::{relative_change_tsv, CellOutcome, Grid, ALPHA};
