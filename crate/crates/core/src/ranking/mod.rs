//! Paragraph → document rankings and retrieval metrics.

mod metrics;
mod qbd;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::search::SearchHit;

pub use metrics::{macro_average, precision_recall_at, MetricReport};
pub use qbd::{
    evaluate_qbd, write_curve_csv, CurveRow, DenseBackend, MltBackend, QbdBackend, QbdConfig, QbdReport, QueryPolicy,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankMode {
    /// A document sits where its best paragraph sits.
    #[default]
    First,
    /// Documents with more retrieved paragraphs rank higher.
    Count,
}

impl fmt::Display for RankMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RankMode::First => "first",
            RankMode::Count => "count",
        })
    }
}

impl FromStr for RankMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "first" => Ok(RankMode::First),
            "count" => Ok(RankMode::Count),
            other => Err(Error::invalid(format!("unknown rank mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedDocument {
    pub doc_id: String,
    /// Score of the document's best paragraph.
    pub score: f64,
    /// Number of retrieved paragraphs from this document.
    pub count: usize,
    /// Rank of the best paragraph in the paragraph list.
    pub best_rank: usize,
    /// Retrieved paragraph ids, best first.
    pub paragraphs: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DocumentRanking(pub Vec<RankedDocument>);

impl DocumentRanking {
    pub fn doc_ids(&self) -> Vec<&str> {
        self.0.iter().map(|d| d.doc_id.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Groups rank-ordered hits by document, in order of first appearance.
fn group(hits: &[SearchHit]) -> Vec<RankedDocument> {
    let mut slot: HashMap<&str, usize> = HashMap::new();
    let mut docs: Vec<RankedDocument> = Vec::new();
    for (pos, h) in hits.iter().enumerate() {
        match slot.get(h.doc_id.as_str()) {
            Some(&i) => {
                docs[i].count += 1;
                docs[i].paragraphs.push(h.unit_id.clone());
            }
            None => {
                slot.insert(&h.doc_id, docs.len());
                docs.push(RankedDocument {
                    doc_id: h.doc_id.clone(),
                    score: h.score,
                    count: 1,
                    best_rank: if h.rank > 0 { h.rank } else { pos + 1 },
                    paragraphs: vec![h.unit_id.clone()],
                });
            }
        }
    }
    docs
}

/// Orders documents by the rank of their first paragraph in `hits`.
pub fn aggregate_first(hits: &[SearchHit]) -> DocumentRanking {
    DocumentRanking(group(hits))
}

/// Orders documents by retrieved paragraph count, ties by best paragraph
/// rank, then document id.
pub fn aggregate_count(hits: &[SearchHit]) -> DocumentRanking {
    let mut docs = group(hits);
    docs.sort_by(|a, b| b.count.cmp(&a.count).then(a.best_rank.cmp(&b.best_rank)).then_with(|| a.doc_id.cmp(&b.doc_id)));
    DocumentRanking(docs)
}

pub fn aggregate(hits: &[SearchHit], mode: RankMode) -> DocumentRanking {
    match mode {
        RankMode::First => aggregate_first(hits),
        RankMode::Count => aggregate_count(hits),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn hits(docs: &[&str]) -> Vec<SearchHit> {
        docs.iter()
            .enumerate()
            .map(|(i, d)| SearchHit {
                unit_id: format!("{d}#{i}"),
                doc_id: d.to_string(),
                score: 1.0 - i as f64 * 0.01,
                rank: i + 1,
            })
            .collect()
    }

    #[test]
    fn worked_examples() {
        let h = hits(&["d1", "d2", "d2", "d3", "d3", "d3"]);
        assert_eq!(aggregate_first(&h).doc_ids(), vec!["d1", "d2", "d3"]);
        assert_eq!(aggregate_count(&h).doc_ids(), vec!["d3", "d2", "d1"]);
    }

    #[test]
    fn first_based_cases() {
        assert_eq!(aggregate_first(&hits(&["d7"])).doc_ids(), vec!["d7"]);
        let r = aggregate_first(&hits(&["d2", "d1", "d2"]));
        assert_eq!(r.doc_ids(), vec!["d2", "d1"]);
        assert_eq!(r.0[0].paragraphs, vec!["d2#0", "d2#2"]);
        assert!((r.0[1].score - 0.99).abs() < 1e-12);
    }

    #[test]
    fn count_based_cases() {
        assert_eq!(aggregate_count(&hits(&["d1", "d1", "d2"])).doc_ids(), vec!["d1", "d2"]);
        let singles = hits(&["d4", "d9", "d1"]);
        assert_eq!(aggregate_count(&singles).doc_ids(), aggregate_first(&singles).doc_ids());
        // tie on count resolved by best rank
        assert_eq!(aggregate_count(&hits(&["b", "a", "a", "b", "c"])).doc_ids(), vec!["b", "a", "c"]);
    }

    proptest! {
        #[test]
        fn aggregation_properties(docs in proptest::collection::vec(0u8..12, 0..60)) {
            let names: Vec<String> = docs.iter().map(|d| format!("d{d}")).collect();
            let refs: Vec<&str> = names.iter().map(String::as_str).collect();
            let h = hits(&refs);
            let first = aggregate_first(&h);
            let count = aggregate_count(&h);
            let distinct: std::collections::BTreeSet<&str> = refs.iter().copied().collect();
            prop_assert_eq!(first.len(), distinct.len());
            prop_assert_eq!(count.len(), distinct.len());
            // best ranks strictly increase in first-based order
            for w in first.0.windows(2) {
                prop_assert!(w[0].best_rank < w[1].best_rank);
            }
            for w in count.0.windows(2) {
                prop_assert!(w[0].count > w[1].count || (w[0].count == w[1].count && w[0].best_rank < w[1].best_rank));
            }
            prop_assert_eq!(aggregate_first(&h), first);
        }
    }
}
