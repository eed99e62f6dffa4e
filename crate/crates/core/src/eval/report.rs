//! Per-query metric report with an optional paired baseline comparison.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use super::metrics::{aggregate, average_precision, QueryMetrics};
use super::significance::paired_randomization_test;
use crate::catalog::Catalog;
use crate::query::Query;

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub rows: BTreeMap<String, QueryMetrics>,
    /// Baseline AP per included query.
    pub baseline_ap: Option<BTreeMap<String, f64>>,
    pub excluded: BTreeSet<String>,
    pub p_value: Option<f64>,
}

/// Baseline AP from a `qid → entity ids` ranking; queries absent from the
/// baseline score 0.
pub fn baseline_ap(
    baseline: &BTreeMap<String, Vec<String>>,
    queries: &[Query],
    rows: &BTreeMap<String, QueryMetrics>,
    catalog: &Catalog,
) -> BTreeMap<String, f64> {
    queries
        .iter()
        .filter(|q| rows.contains_key(&q.qid))
        .map(|q| {
            let rel: BTreeSet<&str> = q.relevant().iter().map(|&e| catalog.entity_name(e)).collect();
            let ranked: Vec<&str> = baseline.get(&q.qid).map(|v| v.iter().map(String::as_str).collect()).unwrap_or_default();
            (q.qid.clone(), average_precision(&ranked, &rel).unwrap_or(0.0))
        })
        .collect()
}

impl Report {
    pub fn new(
        rows: BTreeMap<String, QueryMetrics>,
        excluded: BTreeSet<String>,
        baseline: Option<BTreeMap<String, f64>>,
        permutations: usize,
        seed: u64,
    ) -> Self {
        let p_value = baseline.as_ref().map(|b| {
            let pairs: Vec<(f64, f64)> = rows.iter().map(|(q, m)| (m.ap, b.get(q).copied().unwrap_or(0.0))).collect();
            paired_randomization_test(&pairs, permutations, seed)
        });
        Report {
            rows,
            baseline_ap: baseline,
            excluded,
            p_value,
        }
    }

    pub fn render(&self) -> String {
        let mut s = String::from("qid\tap\trr\tndcg@1\tndcg@5\tndcg@10");
        if self.baseline_ap.is_some() {
            s.push_str("\tbaseline_ap\tdelta_ap");
        }
        s.push('\n');
        // `+ 0.0` turns a negative zero into a positive one.
        let line = |s: &mut String, qid: &str, m: &QueryMetrics, base: Option<f64>| {
            let _ = write!(
                s,
                "{qid}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
                m.ap + 0.0,
                m.rr + 0.0,
                m.ndcg[0] + 0.0,
                m.ndcg[1] + 0.0,
                m.ndcg[2] + 0.0
            );
            if let Some(b) = base {
                let _ = write!(s, "\t{:.6}\t{:.6}", b + 0.0, m.ap - b + 0.0);
            }
            s.push('\n');
        };
        for (q, m) in &self.rows {
            let base = self.baseline_ap.as_ref().map(|b| b.get(q).copied().unwrap_or(0.0));
            line(&mut s, q, m, base);
        }
        let agg = aggregate(self.rows.values());
        let all = QueryMetrics {
            ap: agg.map,
            rr: agg.mrr,
            ndcg: agg.ndcg,
        };
        let base_mean = self.baseline_ap.as_ref().map(|b| {
            if b.is_empty() {
                0.0
            } else {
                b.values().sum::<f64>() / b.len() as f64
            }
        });
        line(&mut s, "all", &all, base_mean);
        let excluded: Vec<&str> = self.excluded.iter().map(String::as_str).collect();
        let _ = writeln!(s, "#excluded\t{}\t{}", excluded.len(), excluded.join(","));
        let _ = writeln!(s, "#queries\t{}", self.rows.len());
        if let Some(p) = self.p_value {
            let _ = writeln!(s, "#p_value\t{p:.6}");
        }
        s
    }
}
