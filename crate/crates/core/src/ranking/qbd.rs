//! Query-by-document evaluation: every sampled document queries the index
//! (by one of its paragraphs, or whole), its own document is excluded, and
//! same-topic documents count as relevant.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{macro_average, precision_recall_at, MetricReport};
use super::{aggregate, RankMode};
use crate::corpus::SplitAssignment;
use crate::dense::{HnswIndex, QueryVector, VectorStore};
use crate::error::{Error, Result};
use crate::hashing::derive_seed;
use crate::par::{self, Execution};
use crate::search::SearchHit;
use crate::tfidf::{Granularity, MltParams, TfidfIndex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QueryPolicy {
    #[default]
    FirstParagraph,
    RandomParagraph,
}

impl fmt::Display for QueryPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QueryPolicy::FirstParagraph => "first-paragraph",
            QueryPolicy::RandomParagraph => "random-paragraph",
        })
    }
}

impl FromStr for QueryPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "first-paragraph" | "first" => Ok(QueryPolicy::FirstParagraph),
            "random-paragraph" | "random" => Ok(QueryPolicy::RandomParagraph),
            other => Err(Error::invalid(format!("unknown query policy `{other}`"))),
        }
    }
}

impl QueryPolicy {
    /// Picks the query unit among a document's units (ordinal order).
    pub fn pick<'a>(&self, doc_id: &str, units: &'a [String], seed: u64) -> Option<&'a String> {
        match self {
            QueryPolicy::FirstParagraph => units.first(),
            QueryPolicy::RandomParagraph if units.is_empty() => None,
            QueryPolicy::RandomParagraph => {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, doc_id));
                Some(&units[rng.random_range(0..units.len())])
            }
        }
    }
}

/// Retrieval backend for query-by-document evaluation.
pub trait QbdBackend: Sync {
    fn name(&self) -> &str;

    /// Queryable units of a document in ordinal order; empty if unindexed.
    fn query_units(&self, doc_id: &str) -> Vec<String>;

    /// Up to `depth` unit hits for `query_unit`, never from `excluded_doc`.
    fn retrieve(&self, query_unit: &str, excluded_doc: &str, depth: usize) -> Result<Vec<SearchHit>>;
}

pub struct MltBackend<'a> {
    index: &'a TfidfIndex,
    params: MltParams,
    by_parent: HashMap<&'a str, Vec<String>>,
    name: String,
}

impl<'a> MltBackend<'a> {
    pub fn new(index: &'a TfidfIndex, params: MltParams) -> Self {
        let mut by_parent: HashMap<&str, Vec<String>> = HashMap::new();
        for u in index.units() {
            by_parent.entry(u.parent.as_str()).or_default().push(u.id.clone());
        }
        let name = match index.granularity() {
            Granularity::Document => "mlt-doc",
            Granularity::Paragraph => "mlt-para",
        };
        MltBackend { index, params, by_parent, name: name.to_string() }
    }
}

impl QbdBackend for MltBackend<'_> {
    fn name(&self) -> &str {
        &self.name
    }

    fn query_units(&self, doc_id: &str) -> Vec<String> {
        self.by_parent.get(doc_id).cloned().unwrap_or_default()
    }

    fn retrieve(&self, query_unit: &str, excluded_doc: &str, depth: usize) -> Result<Vec<SearchHit>> {
        Ok(self.index.mlt_search_by(query_unit, &self.params, depth, |u| u.parent != excluded_doc)?.hits)
    }
}

/// Dense-vector search, exact unless an HNSW index is supplied.
pub struct DenseBackend<'a> {
    store: &'a VectorStore,
    hnsw: Option<&'a HnswIndex>,
    ef_search: usize,
}

impl<'a> DenseBackend<'a> {
    pub fn exact(store: &'a VectorStore) -> Self {
        DenseBackend { store, hnsw: None, ef_search: 0 }
    }

    pub fn hnsw(index: &'a HnswIndex, ef_search: usize) -> Self {
        DenseBackend { store: index.store(), hnsw: Some(index), ef_search }
    }
}

impl QbdBackend for DenseBackend<'_> {
    fn name(&self) -> &str {
        "dvs"
    }

    fn query_units(&self, doc_id: &str) -> Vec<String> {
        match self.store.doc_index(doc_id) {
            Some(d) => self.store.units_of(d).iter().map(|&u| self.store.unit_id(u).to_string()).collect(),
            None => Vec::new(),
        }
    }

    fn retrieve(&self, query_unit: &str, excluded_doc: &str, depth: usize) -> Result<Vec<SearchHit>> {
        let unit = self.store.unit_index(query_unit).ok_or_else(|| Error::UnknownId(query_unit.to_string()))?;
        let query = QueryVector::from(self.store.vector(unit));
        let mut mask = self.store.full_mask();
        mask.exclude(self.store.doc_of(unit));
        if let Some(d) = self.store.doc_index(excluded_doc) {
            mask.exclude(d);
        }
        match self.hnsw {
            Some(ix) => ix.search_masked(&query, &mask, depth, self.ef_search.max(depth)),
            None => self.store.exact_search_masked(&query, &mask, depth, Execution::Sequential),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QbdConfig {
    pub rank_mode: RankMode,
    pub query_policy: QueryPolicy,
    pub k_grid: Vec<usize>,
    pub seed: u64,
    /// Average over queries directly instead of per topic first.
    pub per_query: bool,
    pub exec: Execution,
}

impl Default for QbdConfig {
    fn default() -> Self {
        QbdConfig {
            rank_mode: RankMode::First,
            query_policy: QueryPolicy::FirstParagraph,
            k_grid: (1..=30).map(|i| i * 10).collect(),
            seed: 0,
            per_query: false,
            exec: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub backend: String,
    pub rank_mode: RankMode,
    pub query_policy: QueryPolicy,
    pub k: usize,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QbdReport {
    pub reports: Vec<MetricReport>,
    pub curve: Vec<CurveRow>,
    pub queries: usize,
}

/// Ranks documents for one query, deepening the paragraph fetch until
/// `want` documents are found or the backend runs dry.
pub(crate) fn ranked_documents(
    backend: &dyn QbdBackend,
    query_unit: &str,
    query_doc: &str,
    mode: RankMode,
    want: usize,
) -> Result<Vec<String>> {
    let mut depth = want.max(1) * 2;
    loop {
        let hits = backend.retrieve(query_unit, query_doc, depth)?;
        let ranking = aggregate(&hits, mode);
        if ranking.len() >= want || hits.len() < depth {
            return Ok(ranking.0.into_iter().take(want).map(|d| d.doc_id).collect());
        }
        depth *= 2;
    }
}

pub fn evaluate_qbd(split: &SplitAssignment, backend: &dyn QbdBackend, config: &QbdConfig) -> Result<QbdReport> {
    if config.k_grid.is_empty() || config.k_grid.contains(&0) {
        return Err(Error::invalid("k_grid must be non-empty and positive"));
    }
    let k_max = *config.k_grid.iter().max().expect("non-empty");
    let queries: Vec<(&str, &str)> = split.documents().collect();
    let members: BTreeMap<&str, HashSet<&str>> =
        split.topics.iter().map(|(t, ids)| (t.as_str(), ids.iter().map(String::as_str).collect())).collect();

    let per_query: Vec<Result<Vec<(f64, f64)>>> = par::map(config.exec, &queries, |&(doc, topic)| {
        let units = backend.query_units(doc);
        let unit = config
            .query_policy
            .pick(doc, &units, config.seed)
            .ok_or_else(|| Error::Insufficient(format!("document {doc} is not indexed by {}", backend.name())))?;
        let ranked = ranked_documents(backend, unit, doc, config.rank_mode, k_max)?;
        let ranked: Vec<&str> = ranked.iter().map(String::as_str).collect();
        let mut relevant = members[topic].clone();
        relevant.remove(doc);
        Ok(config.k_grid.iter().map(|&k| precision_recall_at(&ranked, &relevant, k)).collect())
    });
    let per_query: Vec<Vec<(f64, f64)>> = per_query.into_iter().collect::<Result<_>>()?;

    let mut reports = Vec::with_capacity(config.k_grid.len());
    for (i, &k) in config.k_grid.iter().enumerate() {
        let (p, r) = if config.per_query {
            let n = per_query.len().max(1) as f64;
            (
                per_query.iter().map(|v| v[i].0).sum::<f64>() / n,
                per_query.iter().map(|v| v[i].1).sum::<f64>() / n,
            )
        } else {
            (
                macro_average(queries.iter().zip(&per_query).map(|((_, t), v)| (*t, v[i].0))),
                macro_average(queries.iter().zip(&per_query).map(|((_, t), v)| (*t, v[i].1))),
            )
        };
        reports.push(MetricReport::new(k, r, p, !config.per_query));
    }
    let curve = reports
        .iter()
        .map(|m| CurveRow {
            backend: backend.name().to_string(),
            rank_mode: config.rank_mode,
            query_policy: config.query_policy,
            k: m.k,
            recall: m.recall,
            precision: m.precision,
            f1: m.f1,
        })
        .collect();
    Ok(QbdReport { reports, curve, queries: queries.len() })
}

pub fn write_curve_csv(mut out: impl Write, rows: &[CurveRow], header: bool) -> Result<()> {
    if header {
        writeln!(out, "backend,rank_mode,query_policy,k,recall,precision,f1")?;
    }
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{:.6},{:.6},{:.6}",
            r.backend, r.rank_mode, r.query_policy, r.k, r.recall, r.precision, r.f1
        )?;
    }
    Ok(())
}
