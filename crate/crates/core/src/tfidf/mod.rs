//! Term statistics, TF-IDF weighting, Jaccard overlap and "more like this"
//! query-by-document search.

mod index;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::hash::Hash;

use serde::{Deserialize, Serialize};

pub use index::{IndexedUnit, MltResult, TfidfIndex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Document,
    Paragraph,
}

/// Unit count and per-term document frequencies of an index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorpusStats {
    pub n: usize,
    pub df: HashMap<String, u32>,
}

impl CorpusStats {
    pub fn from_units<'a, I, T>(units: I) -> Self
    where
        I: IntoIterator<Item = T>,
        T: IntoIterator<Item = &'a String>,
    {
        let mut stats = CorpusStats::default();
        for unit in units {
            stats.n += 1;
            let distinct: BTreeSet<&String> = unit.into_iter().collect();
            for t in distinct {
                *stats.df.entry(t.clone()).or_default() += 1;
            }
        }
        stats
    }

    pub fn df(&self, term: &str) -> u32 {
        self.df.get(term).copied().unwrap_or(0)
    }
}

/// `ln(N / (1 + df))`. Terms present in every unit go negative.
pub fn idf_value(n: usize, df: u32) -> f64 {
    (n as f64 / (1.0 + df as f64)).ln()
}

pub fn idf(stats: &CorpusStats, term: &str) -> f64 {
    idf_value(stats.n, stats.df(term))
}

/// Term → TF-IDF weight; only positive weights are stored.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVector(pub BTreeMap<String, f64>);

impl SparseVector {
    pub fn get(&self, term: &str) -> f64 {
        self.0.get(term).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (small, large) = if self.len() <= other.len() { (self, other) } else { (other, self) };
        small.0.iter().map(|(t, w)| w * large.get(t)).sum()
    }
}

/// Raw term count times idf, dropping non-positive weights.
pub fn tfidf_vector(tokens: &[String], stats: &CorpusStats) -> SparseVector {
    let mut counts: BTreeMap<&str, u32> = BTreeMap::new();
    for t in tokens {
        *counts.entry(t).or_default() += 1;
    }
    SparseVector(
        counts
            .into_iter()
            .filter_map(|(t, c)| {
                let w = c as f64 * idf(stats, t);
                (w > 0.0).then(|| (t.to_string(), w))
            })
            .collect(),
    )
}

/// `|a ∩ b| / |a ∪ b|`, 0 for two empty sets.
pub fn jaccard<T: Eq + Hash>(a: &std::collections::HashSet<T>, b: &std::collections::HashSet<T>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MltParams {
    /// Minimum document-frequency fraction for a query term.
    pub min_df: f64,
    /// Maximum document-frequency fraction for a query term.
    pub max_df: f64,
    pub max_query_terms: usize,
}

impl Default for MltParams {
    fn default() -> Self {
        MltParams { min_df: 0.0, max_df: 0.8, max_query_terms: 25 }
    }
}

impl MltParams {
    pub fn validate(&self) -> crate::Result<()> {
        let in_unit = |x: f64| (0.0..=1.0).contains(&x);
        if !in_unit(self.min_df) || !in_unit(self.max_df) || self.min_df > self.max_df {
            return Err(crate::Error::invalid(format!(
                "need 0 <= min_df <= max_df <= 1, got min_df={} max_df={}",
                self.min_df, self.max_df
            )));
        }
        if self.max_query_terms == 0 {
            return Err(crate::Error::invalid("max_query_terms must be positive"));
        }
        Ok(())
    }
}

/// Distinct tokens ordered by idf descending (ties lexicographic), first `count`.
pub fn top_idf_keywords(tokens: &[String], count: usize, stats: &CorpusStats) -> Vec<String> {
    let distinct: BTreeSet<&String> = tokens.iter().collect();
    let mut ranked: Vec<(f64, &String)> = distinct.into_iter().map(|t| (idf(stats, t), t)).collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    ranked.into_iter().take(count).map(|(_, t)| t.clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn stats(n: usize, df: &[(&str, u32)]) -> CorpusStats {
        CorpusStats { n, df: df.iter().map(|(t, d)| (t.to_string(), *d)).collect() }
    }

    fn toks(ts: &[&str]) -> Vec<String> {
        ts.iter().map(|t| t.to_string()).collect()
    }

    #[test]
    fn idf_values() {
        assert!((idf(&stats(100, &[("t", 9)]), "t") - std::f64::consts::LN_10).abs() < 1e-6);
        assert!((idf(&stats(1, &[("t", 1)]), "t") + std::f64::consts::LN_2).abs() < 1e-6);
        assert!((idf(&stats(10, &[]), "unseen") - std::f64::consts::LN_10).abs() < 1e-6);
    }

    #[test]
    fn idf_strictly_decreasing_in_df() {
        for n in [1usize, 7, 300] {
            for df in 0..n as u32 {
                assert!(idf_value(n, df) > idf_value(n, df + 1));
            }
        }
    }

    #[test]
    fn tfidf_weights() {
        let s = stats(4, &[("a", 3), ("b", 1)]);
        let v = tfidf_vector(&toks(&["a", "a", "b"]), &s);
        assert_eq!(v.len(), 1, "a has weight 2*ln(1) = 0 and is dropped");
        assert!((v.get("b") - std::f64::consts::LN_2).abs() < 1e-6);
        assert!(tfidf_vector(&[], &s).is_empty());
        let v = tfidf_vector(&toks(&["x"]), &s);
        assert!((v.get("x") - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn jaccard_cases() {
        let set = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<HashSet<_>>();
        assert_eq!(jaccard(&set(&["a", "b"]), &set(&["a", "b"])), 1.0);
        assert_eq!(jaccard(&set(&["a"]), &set(&["b"])), 0.0);
        assert!((jaccard(&set(&["a", "b"]), &set(&["b", "c"])) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(jaccard::<String>(&HashSet::new(), &HashSet::new()), 0.0);
    }

    #[test]
    fn keywords_by_idf() {
        let s = stats(300, &[("rare", 1), ("common", 200), ("alpha", 5), ("beta", 5)]);
        assert_eq!(top_idf_keywords(&toks(&["common", "rare"]), 1, &s), vec!["rare"]);
        assert_eq!(top_idf_keywords(&toks(&["common", "rare", "rare"]), 10, &s).len(), 2);
        assert_eq!(top_idf_keywords(&toks(&["beta", "alpha"]), 1, &s), vec!["alpha"]);
    }

    #[test]
    fn stats_from_units() {
        let units = [toks(&["a", "a", "b"]), toks(&["b"]), toks(&[])];
        let s = CorpusStats::from_units(units.iter());
        assert_eq!(s.n, 3);
        assert_eq!(s.df("a"), 1);
        assert_eq!(s.df("b"), 2);
    }

    #[test]
    fn params_validation() {
        assert!(MltParams::default().validate().is_ok());
        assert!(MltParams { min_df: 0.9, max_df: 0.8, max_query_terms: 5 }.validate().is_err());
        assert!(MltParams { max_query_terms: 0, ..Default::default() }.validate().is_err());
    }
}
