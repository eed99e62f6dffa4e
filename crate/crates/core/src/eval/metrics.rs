//! Binary-relevance ranking metrics.

use std::collections::BTreeSet;
use std::hash::Hash;

pub const NDCG_CUTOFFS: [usize; 3] = [1, 5, 10];

/// Mean over relevant items of precision at each relevant hit; relevant
/// items never retrieved contribute 0. `None` when `relevant` is empty.
pub fn average_precision<T: Ord + Hash>(ranked: &[T], relevant: &BTreeSet<T>) -> Option<f64> {
    if relevant.is_empty() {
        return None;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, e) in ranked.iter().enumerate() {
        if relevant.contains(e) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Some(sum / relevant.len() as f64)
}

/// `1 / rank` of the first relevant item, 0 if none is retrieved.
pub fn reciprocal_rank<T: Ord + Hash>(ranked: &[T], relevant: &BTreeSet<T>) -> Option<f64> {
    if relevant.is_empty() {
        return None;
    }
    Some(
        ranked
            .iter()
            .position(|e| relevant.contains(e))
            .map_or(0.0, |i| 1.0 / (i + 1) as f64),
    )
}

/// DCG@k / IDCG@k with unit gains and `1 / log2(1 + rank)` discounts.
pub fn ndcg_at<T: Ord + Hash>(ranked: &[T], relevant: &BTreeSet<T>, k: usize) -> Option<f64> {
    if relevant.is_empty() {
        return None;
    }
    let discount = |i: usize| 1.0 / ((i + 2) as f64).log2();
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, e)| relevant.contains(e))
        .map(|(i, _)| discount(i))
        .fold(0.0, |a, x| a + x);
    let idcg: f64 = (0..k.min(relevant.len())).map(discount).fold(0.0, |a, x| a + x);
    Some(if idcg > 0.0 { dcg / idcg } else { 0.0 })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryMetrics {
    pub ap: f64,
    pub rr: f64,
    pub ndcg: [f64; 3],
}

pub fn query_metrics<T: Ord + Hash>(ranked: &[T], relevant: &BTreeSet<T>) -> Option<QueryMetrics> {
    Some(QueryMetrics {
        ap: average_precision(ranked, relevant)?,
        rr: reciprocal_rank(ranked, relevant)?,
        ndcg: NDCG_CUTOFFS.map(|k| ndcg_at(ranked, relevant, k).unwrap_or(0.0)),
    })
}

/// Arithmetic means in the given order.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Aggregate {
    pub map: f64,
    pub mrr: f64,
    pub ndcg: [f64; 3],
    pub queries: usize,
}

pub fn aggregate<'a>(per_query: impl IntoIterator<Item = &'a QueryMetrics>) -> Aggregate {
    let mut a = Aggregate::default();
    for m in per_query {
        a.map += m.ap;
        a.mrr += m.rr;
        for i in 0..3 {
            a.ndcg[i] += m.ndcg[i];
        }
        a.queries += 1;
    }
    if a.queries > 0 {
        let n = a.queries as f64;
        a.map /= n;
        a.mrr /= n;
        a.ndcg.iter_mut().for_each(|x| *x /= n);
    }
    a
}
