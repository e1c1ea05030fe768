use crate::span::Span;

/// `sum_{i=1..min(k, n)} (2^rel_i - 1) / log2(i + 1)`
pub fn dcg_at_k(rels: &[u32], k: usize) -> f64 {
    rels.iter().take(k).enumerate().map(|(i, &rel)| (2f64.powi(rel as i32) - 1.0) / ((i + 2) as f64).log2()).sum()
}

/// DCG of the best possible ordering of the query's judged grades.
pub fn ideal_dcg_at_k(all_rels: &[u32], k: usize) -> f64 {
    let mut sorted = all_rels.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    dcg_at_k(&sorted, k)
}

/// `None` when the query has no relevant judgment (ideal DCG is zero).
pub fn ndcg_at_k(ranked: &[u32], all_rels: &[u32], k: usize) -> Option<f64> {
    let ideal = ideal_dcg_at_k(all_rels, k);
    (ideal > 0.0).then(|| dcg_at_k(ranked, k) / ideal)
}

/// 1 iff the chunk shares at least one byte with a ground-truth span.
pub fn overlap_relevance(chunk_span: Span, gt_spans: &[Span]) -> u32 {
    u32::from(gt_spans.iter().any(|g| chunk_span.intersects(g)))
}
