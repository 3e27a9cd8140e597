//! Review engine shared by the simulator and the session service.
//!
//! A [`ReviewSession`] alternates between issuing a batch of unreviewed
//! documents and absorbing accept/decline judgments for that batch.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dense::{hash_embed, DenseVector, DocMask, HnswIndex, QueryVector, VectorStore};
use crate::error::{Error, Result};
use crate::feedback::{AcceptedParagraph, FeedbackContext, QueryState, StrategyConfig, StrategyKind};
use crate::par::Execution;
use crate::ranking::{aggregate, RankMode};
use crate::search::SearchHit;
use crate::tfidf::TfidfIndex;

/// Paragraph fetch size is this many times the batch size before doubling.
pub const FETCH_FACTOR: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Exact,
    Hnsw,
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendKind::Exact => "exact",
            BackendKind::Hnsw => "hnsw",
        })
    }
}

impl FromStr for BackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(BackendKind::Exact),
            "hnsw" => Ok(BackendKind::Hnsw),
            other => Err(Error::invalid(format!("unknown backend `{other}`"))),
        }
    }
}

/// How batches are retrieved and sized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalSettings {
    pub batch_size: usize,
    pub rank_mode: RankMode,
    pub backend: BackendKind,
    pub ef_search: usize,
    #[serde(skip)]
    pub exec: Execution,
}

impl Default for RetrievalSettings {
    fn default() -> Self {
        RetrievalSettings {
            batch_size: 10,
            rank_mode: RankMode::First,
            backend: BackendKind::Exact,
            ef_search: 100,
            exec: Execution::Sequential,
        }
    }
}

impl RetrievalSettings {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if self.ef_search == 0 {
            return Err(Error::invalid("ef_search must be at least 1"));
        }
        Ok(())
    }
}

/// One document offered for review, represented by its best paragraph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchItem {
    pub doc_id: String,
    pub para_id: String,
    pub score: f64,
}

/// Where a session's initial query vector came from.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionQuery {
    pub vector: DenseVector,
    /// Document the query was taken from; never offered for review.
    pub own_doc: Option<String>,
}

pub struct Engine {
    store: VectorStore,
    hnsw: Option<HnswIndex>,
    tfidf: Option<TfidfIndex>,
    /// Sorted term ids per store document, for the keyword prefilter.
    doc_terms: Vec<Vec<u32>>,
    embed_seed: u64,
}

impl Engine {
    pub fn new(store: VectorStore) -> Self {
        Engine { store, hnsw: None, tfidf: None, doc_terms: Vec::new(), embed_seed: 0 }
    }

    pub fn with_hnsw(index: HnswIndex) -> Self {
        let mut e = Engine::new(VectorStore::new(index.store().dim()));
        e.hnsw = Some(index);
        e
    }

    /// Attaches a TF-IDF index used for keyword extraction and the keyword
    /// prefilter. Documents it does not know never pass the prefilter.
    pub fn with_tfidf(mut self, index: TfidfIndex) -> Self {
        let store = self.store();
        self.doc_terms = (0..store.doc_count() as u32)
            .map(|d| index.terms_of(store.doc_id(d)).unwrap_or_default())
            .collect();
        self.tfidf = Some(index);
        self
    }

    /// Seed of the hash embedder that produced the stored vectors, used to
    /// embed free-text queries.
    pub fn with_embed_seed(mut self, seed: u64) -> Self {
        self.embed_seed = seed;
        self
    }

    pub fn store(&self) -> &VectorStore {
        match &self.hnsw {
            Some(ix) => ix.store(),
            None => &self.store,
        }
    }

    pub fn hnsw(&self) -> Option<&HnswIndex> {
        self.hnsw.as_ref()
    }

    pub fn tfidf(&self) -> Option<&TfidfIndex> {
        self.tfidf.as_ref()
    }

    pub fn query_for_unit(&self, para_id: &str) -> Result<SessionQuery> {
        let store = self.store();
        let unit = store.unit_index(para_id).ok_or_else(|| Error::UnknownId(para_id.to_string()))?;
        Ok(SessionQuery {
            vector: DenseVector(store.vector(unit).to_vec()),
            own_doc: Some(store.doc_id(store.doc_of(unit)).to_string()),
        })
    }

    /// Query by document: its first paragraph.
    pub fn query_for_doc(&self, doc_id: &str) -> Result<SessionQuery> {
        let store = self.store();
        let doc = store.doc_index(doc_id).ok_or_else(|| Error::UnknownId(doc_id.to_string()))?;
        let first = store.units_of(doc)[0];
        self.query_for_unit(store.unit_id(first))
    }

    pub fn query_for_text(&self, text: &str) -> Result<SessionQuery> {
        Ok(SessionQuery { vector: hash_embed(text, self.store().dim(), self.embed_seed)?, own_doc: None })
    }

    fn search(&self, query: &QueryVector, mask: &DocMask, k: usize, settings: &RetrievalSettings) -> Result<Vec<SearchHit>> {
        match (settings.backend, &self.hnsw) {
            (BackendKind::Hnsw, Some(ix)) => ix.search_masked(query, mask, k, settings.ef_search.max(k)),
            (BackendKind::Hnsw, None) => Err(Error::invalid("no HNSW index loaded")),
            (BackendKind::Exact, _) => self.store().exact_search_masked(query, mask, k, settings.exec),
        }
    }

    fn mask_for(&self, state: &QueryState, own_doc: Option<&str>) -> DocMask {
        let store = self.store();
        let mut mask = store.mask_excluding(state.accepted_docs().iter().chain(state.declined_docs()));
        if let Some(d) = own_doc.and_then(|d| store.doc_index(d)) {
            mask.exclude(d);
        }
        if !state.keywords().is_empty() {
            let ids: Vec<u32> = match &self.tfidf {
                Some(ix) => state.keywords().iter().filter_map(|k| ix.term_id(k)).collect(),
                None => Vec::new(),
            };
            for d in 0..store.doc_count() as u32 {
                let terms = self.doc_terms.get(d as usize).map(Vec::as_slice).unwrap_or(&[]);
                if mask.allows(d) && !ids.iter().any(|t| terms.binary_search(t).is_ok()) {
                    mask.exclude(d);
                }
            }
        }
        mask
    }

    /// Top `batch_size` unreviewed documents for the current query.
    pub fn next_batch(&self, state: &QueryState, own_doc: Option<&str>, settings: &RetrievalSettings) -> Result<Vec<BatchItem>> {
        settings.validate()?;
        let mask = self.mask_for(state, own_doc);
        if mask.allowed_count() == 0 {
            return Ok(Vec::new());
        }
        let total = self.store().len();
        let mut fetch = (FETCH_FACTOR * settings.batch_size).min(total);
        loop {
            let hits = self.search(state.current(), &mask, fetch, settings)?;
            let ranking = aggregate(&hits, settings.rank_mode);
            if ranking.len() >= settings.batch_size || hits.len() < fetch || fetch >= total {
                return Ok(ranking
                    .0
                    .into_iter()
                    .take(settings.batch_size)
                    .map(|d| BatchItem { para_id: d.paragraphs[0].clone(), doc_id: d.doc_id, score: d.score })
                    .collect());
            }
            fetch = (fetch * 2).min(total);
        }
    }

    /// Applies judgments on `batch` to `state`; accepted results are fed in
    /// batch order.
    pub fn absorb(
        &self,
        state: &mut QueryState,
        batch: &[BatchItem],
        accepted: &HashSet<&str>,
        strategy: &StrategyConfig,
    ) -> Result<()> {
        let store = self.store();
        let mut acc = Vec::new();
        let mut declined = Vec::new();
        for item in batch {
            if accepted.contains(item.doc_id.as_str()) {
                let embedding = store.get(&item.para_id).ok_or_else(|| Error::UnknownId(item.para_id.clone()))?;
                acc.push(AcceptedParagraph { para_id: item.para_id.clone(), doc_id: item.doc_id.clone(), embedding });
            } else {
                declined.push(item.doc_id.clone());
            }
        }
        state.apply(&acc, &declined, strategy, self)
    }
}

impl FeedbackContext for Engine {
    fn siblings(&self, para_id: &str) -> Vec<(String, DenseVector)> {
        let store = self.store();
        let Some(unit) = store.unit_index(para_id) else {
            return Vec::new();
        };
        store
            .units_of(store.doc_of(unit))
            .iter()
            .filter(|&&u| u != unit)
            .map(|&u| (store.unit_id(u).to_string(), DenseVector(store.vector(u).to_vec())))
            .collect()
    }

    fn keywords(&self, doc_id: &str, count: usize) -> Result<Vec<String>> {
        match &self.tfidf {
            Some(ix) => ix.top_idf_keywords(doc_id, count),
            None => Err(Error::invalid("keyword expansion needs a TF-IDF index")),
        }
    }
}

/// Session state: query, strategy, and the batch awaiting judgment.
#[derive(Debug, Clone)]
pub struct ReviewSession {
    strategy: StrategyConfig,
    settings: RetrievalSettings,
    state: QueryState,
    own_doc: Option<String>,
    batch: Vec<BatchItem>,
    iteration: usize,
}

impl ReviewSession {
    /// Creates the session and retrieves its first batch.
    pub fn start(engine: &Engine, query: SessionQuery, strategy: StrategyConfig, settings: RetrievalSettings) -> Result<Self> {
        let mut s = ReviewSession::prepare(engine, query, strategy, settings)?;
        s.refill(engine)?;
        Ok(s)
    }

    /// Like [`start`](Self::start) but without retrieving a batch yet.
    pub fn prepare(engine: &Engine, query: SessionQuery, strategy: StrategyConfig, settings: RetrievalSettings) -> Result<Self> {
        strategy.validate()?;
        settings.validate()?;
        if strategy.kind == StrategyKind::KeywordExpansion && engine.tfidf().is_none() {
            return Err(Error::invalid("keyword expansion needs a TF-IDF index"));
        }
        if query.vector.dim() != engine.store().dim() {
            return Err(Error::DimensionMismatch { expected: engine.store().dim(), actual: query.vector.dim() });
        }
        Ok(ReviewSession {
            strategy,
            settings,
            state: QueryState::new(QueryVector::from(&query.vector))?,
            own_doc: query.own_doc,
            batch: Vec::new(),
            iteration: 0,
        })
    }

    pub fn strategy(&self) -> &StrategyConfig {
        &self.strategy
    }

    pub fn settings(&self) -> &RetrievalSettings {
        &self.settings
    }

    pub fn state(&self) -> &QueryState {
        &self.state
    }

    pub fn own_doc(&self) -> Option<&str> {
        self.own_doc.as_deref()
    }

    /// The batch awaiting judgment; empty once candidates are exhausted.
    pub fn batch(&self) -> &[BatchItem] {
        &self.batch
    }

    /// Number of batches judged so far.
    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn reviewed_count(&self) -> usize {
        self.state.accepted_docs().len() + self.state.declined_docs().len()
    }

    /// Retrieves the next batch for the current state.
    pub fn refill(&mut self, engine: &Engine) -> Result<()> {
        self.batch = engine.next_batch(&self.state, self.own_doc.as_deref(), &self.settings)?;
        Ok(())
    }

    /// Records judgments for the whole current batch and updates the query.
    /// The batch is cleared; call [`refill`](Self::refill) for the next one.
    pub fn judge(&mut self, engine: &Engine, accepted: &[String], declined: &[String]) -> Result<()> {
        let in_batch: HashSet<&str> = self.batch.iter().map(|b| b.doc_id.as_str()).collect();
        let acc: HashSet<&str> = accepted.iter().map(String::as_str).collect();
        let dec: HashSet<&str> = declined.iter().map(String::as_str).collect();
        if acc.len() != accepted.len() || dec.len() != declined.len() {
            return Err(Error::InvalidFeedback("duplicate document in feedback".into()));
        }
        if let Some(d) = acc.iter().chain(&dec).find(|d| !in_batch.contains(*d)) {
            return Err(Error::InvalidFeedback(format!("document {d} is not in the current batch")));
        }
        if let Some(d) = acc.intersection(&dec).next() {
            return Err(Error::InvalidFeedback(format!("document {d} both accepted and declined")));
        }
        if acc.len() + dec.len() != in_batch.len() {
            return Err(Error::InvalidFeedback("feedback must cover the whole batch".into()));
        }
        let batch = std::mem::take(&mut self.batch);
        if let Err(e) = engine.absorb(&mut self.state, &batch, &acc, &self.strategy) {
            self.batch = batch;
            return Err(e);
        }
        self.iteration += 1;
        Ok(())
    }

    /// [`judge`](Self::judge) followed by [`refill`](Self::refill).
    pub fn submit(&mut self, engine: &Engine, accepted: &[String], declined: &[String]) -> Result<()> {
        self.judge(engine, accepted, declined)?;
        self.refill(engine)
    }
}
