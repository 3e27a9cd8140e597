use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub k: usize,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    /// Averaged per topic, then across topics.
    #[serde(rename = "macro")]
    pub macro_averaged: bool,
}

impl MetricReport {
    pub fn new(k: usize, recall: f64, precision: f64, macro_averaged: bool) -> Self {
        MetricReport { k, recall, precision, f1: f1(precision, recall), macro_averaged }
    }
}

pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision > 0.0 && recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// Precision and recall of the first `k` ranked documents. Precision always
/// divides by `k`, so short rankings are penalized.
pub fn precision_recall_at(ranked: &[&str], relevant: &HashSet<&str>, k: usize) -> (f64, f64) {
    if k == 0 {
        return (0.0, 0.0);
    }
    let tp = ranked.iter().take(k).filter(|d| relevant.contains(*d)).count() as f64;
    let recall = if relevant.is_empty() { 0.0 } else { tp / relevant.len() as f64 };
    (tp / k as f64, recall)
}

/// Mean of per-group means. Input is `(group, value)` pairs.
pub fn macro_average<'a>(values: impl IntoIterator<Item = (&'a str, f64)>) -> f64 {
    let mut groups: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for (g, v) in values {
        let e = groups.entry(g).or_default();
        e.0 += v;
        e.1 += 1;
    }
    if groups.is_empty() {
        return 0.0;
    }
    groups.values().map(|(s, n)| s / *n as f64).sum::<f64>() / groups.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f1_is_harmonic_mean() {
        assert_eq!(f1(0.0, 1.0), 0.0);
        assert!((f1(0.5, 1.0) - 2.0 / 3.0).abs() < 1e-15);
        let r = MetricReport::new(10, 0.25, 0.75, true);
        assert!((r.f1 - 0.375).abs() < 1e-15);
    }

    #[test]
    fn precision_recall() {
        let rel: HashSet<&str> = ["a", "b", "c", "d"].into();
        let ranked = ["a", "x", "b", "y"];
        assert_eq!(precision_recall_at(&ranked, &rel, 2), (0.5, 0.25));
        assert_eq!(precision_recall_at(&ranked, &rel, 4), (0.5, 0.5));
        // a short ranking still divides by k
        assert_eq!(precision_recall_at(&ranked, &rel, 8), (0.25, 0.5));
    }

    #[test]
    fn macro_average_is_mean_of_group_means() {
        let vals = [("t1", 1.0), ("t1", 0.0), ("t1", 0.5), ("t2", 0.2)];
        // naive double loop
        let mut sum = 0.0;
        for g in ["t1", "t2"] {
            let xs: Vec<f64> = vals.iter().filter(|(t, _)| *t == g).map(|(_, v)| *v).collect();
            sum += xs.iter().sum::<f64>() / xs.len() as f64;
        }
        assert!((macro_average(vals.iter().copied()) - sum / 2.0).abs() < 1e-15);
        assert_eq!(macro_average(std::iter::empty()), 0.0);
    }
}
