//! Query state and relevance-feedback strategies.
//!
//! Every strategy maps (state, judgments) to a new state. Only accepted
//! paragraphs move the query; declined documents are merely filtered out of
//! later searches.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dense::{DenseVector, QueryVector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    /// Keep querying with the original embedding.
    #[default]
    None,
    /// Original embedding, restricted to documents containing a collected keyword.
    KeywordExpansion,
    Rocchio,
    Average,
    Sum,
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StrategyKind::None => "none",
            StrategyKind::KeywordExpansion => "keyword-expansion",
            StrategyKind::Rocchio => "rocchio",
            StrategyKind::Average => "average",
            StrategyKind::Sum => "sum",
        })
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" | "original" => Ok(StrategyKind::None),
            "keyword-expansion" | "keywords" => Ok(StrategyKind::KeywordExpansion),
            "rocchio" => Ok(StrategyKind::Rocchio),
            "average" => Ok(StrategyKind::Average),
            "sum" => Ok(StrategyKind::Sum),
            other => Err(Error::invalid(format!("unknown strategy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AverageMode {
    /// Each accepted result halves the distance: q ← (q + p) / 2.
    #[default]
    Sequential,
    /// Mean of the original query and every positive so far.
    Global,
}

impl FromStr for AverageMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sequential" => Ok(AverageMode::Sequential),
            "global" => Ok(AverageMode::Global),
            other => Err(Error::invalid(format!("unknown average mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    /// Include the original query in the sum/average.
    pub cumulative: bool,
    /// Extend positive feedback to the sibling paragraphs of accepted ones.
    pub amplify: bool,
    pub alpha: f64,
    pub beta: f64,
    pub keywords_per_doc: usize,
    pub average_mode: AverageMode,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        StrategyConfig {
            kind: StrategyKind::None,
            cumulative: true,
            amplify: false,
            alpha: 0.5,
            beta: 0.5,
            keywords_per_doc: 3,
            average_mode: AverageMode::Sequential,
        }
    }
}

impl StrategyConfig {
    pub fn new(kind: StrategyKind) -> Self {
        StrategyConfig { kind, ..Default::default() }
    }

    pub fn with_cumulative(mut self, cumulative: bool) -> Self {
        self.cumulative = cumulative;
        self
    }

    pub fn with_amplify(mut self, amplify: bool) -> Self {
        self.amplify = amplify;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err(Error::invalid("alpha and beta must be non-negative"));
        }
        if self.kind == StrategyKind::KeywordExpansion && self.keywords_per_doc == 0 {
            return Err(Error::invalid("keywords_per_doc must be positive"));
        }
        Ok(())
    }

    fn vector_based(&self) -> bool {
        matches!(self.kind, StrategyKind::Rocchio | StrategyKind::Average | StrategyKind::Sum)
    }

    /// Whether sibling paragraphs feed the query for this configuration.
    pub fn uses_siblings(&self) -> bool {
        self.amplify && self.vector_based()
    }

    /// Short label such as `sum`, `average (amp)` or `sum non-cumulative`.
    pub fn label(&self) -> String {
        let mut s = self.kind.to_string();
        if matches!(self.kind, StrategyKind::Average | StrategyKind::Sum) && !self.cumulative {
            s.push_str(" non-cumulative");
        }
        if self.kind == StrategyKind::Average && self.cumulative && self.average_mode == AverageMode::Global {
            s.push_str(" global");
        }
        if self.uses_siblings() {
            s.push_str(" (amp)");
        }
        s
    }
}

/// One accepted result: the paragraph that surfaced its document.
#[derive(Debug, Clone, PartialEq)]
pub struct AcceptedParagraph {
    pub para_id: String,
    pub doc_id: String,
    pub embedding: DenseVector,
}

/// Side information some strategies need.
pub trait FeedbackContext {
    /// Embeddings of the other paragraphs of `para_id`'s document, in
    /// ordinal order, each with its paragraph id.
    fn siblings(&self, para_id: &str) -> Vec<(String, DenseVector)>;

    /// Highest-idf keywords of a document.
    fn keywords(&self, doc_id: &str, count: usize) -> Result<Vec<String>>;
}

/// Context for strategies that need neither siblings nor keywords.
pub struct NoContext;

impl FeedbackContext for NoContext {
    fn siblings(&self, _: &str) -> Vec<(String, DenseVector)> {
        Vec::new()
    }

    fn keywords(&self, doc_id: &str, _: usize) -> Result<Vec<String>> {
        Err(Error::UnknownId(doc_id.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryState {
    q0: QueryVector,
    q_cur: QueryVector,
    /// Accepted paragraph embeddings in feedback order.
    positives: Vec<(String, DenseVector)>,
    /// Sibling embeddings added by amplification.
    amplified: Vec<(String, DenseVector)>,
    accepted_docs: BTreeSet<String>,
    declined_docs: BTreeSet<String>,
    keywords: BTreeSet<String>,
    feedback_rounds: usize,
}

impl QueryState {
    pub fn new(query: QueryVector) -> Result<Self> {
        if query.norm().is_nan() || query.norm() <= 0.0 {
            return Err(Error::ZeroNorm);
        }
        Ok(QueryState {
            q0: query.clone(),
            q_cur: query,
            positives: Vec::new(),
            amplified: Vec::new(),
            accepted_docs: BTreeSet::new(),
            declined_docs: BTreeSet::new(),
            keywords: BTreeSet::new(),
            feedback_rounds: 0,
        })
    }

    pub fn original(&self) -> &QueryVector {
        &self.q0
    }

    pub fn current(&self) -> &QueryVector {
        &self.q_cur
    }

    pub fn positives(&self) -> &[(String, DenseVector)] {
        &self.positives
    }

    pub fn amplified(&self) -> &[(String, DenseVector)] {
        &self.amplified
    }

    /// Number of accepted paragraphs, siblings excluded.
    pub fn positive_count(&self) -> usize {
        self.positives.len()
    }

    pub fn accepted_docs(&self) -> &BTreeSet<String> {
        &self.accepted_docs
    }

    pub fn declined_docs(&self) -> &BTreeSet<String> {
        &self.declined_docs
    }

    pub fn keywords(&self) -> &BTreeSet<String> {
        &self.keywords
    }

    pub fn feedback_rounds(&self) -> usize {
        self.feedback_rounds
    }

    pub fn is_reviewed(&self, doc_id: &str) -> bool {
        self.accepted_docs.contains(doc_id) || self.declined_docs.contains(doc_id)
    }

    /// Sum of every effective positive, taken in paragraph-id order so the
    /// result does not depend on the order feedback arrived in.
    fn positive_sum(&self) -> (QueryVector, usize) {
        let all: BTreeMap<&str, &DenseVector> =
            self.positives.iter().chain(&self.amplified).map(|(id, v)| (id.as_str(), v)).collect();
        let mut sum = QueryVector::zeros(self.q0.dim());
        for v in all.values() {
            sum.add_assign(&v.0);
        }
        (sum, all.len())
    }

    /// Records judgments and updates the query in place.
    pub fn apply(
        &mut self,
        accepted: &[AcceptedParagraph],
        declined: &[String],
        config: &StrategyConfig,
        ctx: &dyn FeedbackContext,
    ) -> Result<()> {
        config.validate()?;
        let mut seen: HashSet<&str> = HashSet::new();
        for doc in accepted.iter().map(|a| a.doc_id.as_str()).chain(declined.iter().map(String::as_str)) {
            if self.is_reviewed(doc) {
                return Err(Error::AlreadyReviewed(doc.to_string()));
            }
            if !seen.insert(doc) {
                return Err(Error::InvalidFeedback(format!("document {doc} judged twice")));
            }
        }
        for a in accepted {
            if a.embedding.dim() != self.q0.dim() {
                return Err(Error::DimensionMismatch { expected: self.q0.dim(), actual: a.embedding.dim() });
            }
        }

        // gather everything fallible before mutating
        let mut new_keywords = Vec::new();
        if config.kind == StrategyKind::KeywordExpansion {
            for a in accepted {
                new_keywords.extend(ctx.keywords(&a.doc_id, config.keywords_per_doc)?);
            }
        }
        let vector_based = config.vector_based();
        let mut new_positives: Vec<(String, DenseVector)> = Vec::new();
        let mut new_siblings: Vec<(String, DenseVector)> = Vec::new();
        // effective positives in arrival order: each accepted paragraph, then its siblings
        let mut arrival: Vec<DenseVector> = Vec::new();
        for a in accepted {
            new_positives.push((a.para_id.clone(), a.embedding.clone()));
            if vector_based {
                arrival.push(a.embedding.clone());
            }
            if config.uses_siblings() {
                for (id, v) in ctx.siblings(&a.para_id) {
                    if v.dim() != self.q0.dim() {
                        return Err(Error::DimensionMismatch { expected: self.q0.dim(), actual: v.dim() });
                    }
                    arrival.push(v.clone());
                    new_siblings.push((id, v));
                }
            }
        }

        self.accepted_docs.extend(accepted.iter().map(|a| a.doc_id.clone()));
        self.declined_docs.extend(declined.iter().cloned());
        self.keywords.extend(new_keywords);
        self.feedback_rounds += 1;
        self.positives.extend(new_positives);
        self.amplified.extend(new_siblings);

        match config.kind {
            StrategyKind::None => {}
            StrategyKind::KeywordExpansion => self.q_cur = self.q0.clone(),
            StrategyKind::Rocchio => {
                let (sum, n) = self.positive_sum();
                self.q_cur = if n == 0 {
                    self.q0.clone()
                } else {
                    let mean = sum.scaled(1.0 / n as f64);
                    QueryVector(self.q0.0.iter().zip(&mean.0).map(|(q, m)| config.alpha * q + config.beta * m).collect())
                };
            }
            StrategyKind::Sum => {
                let (sum, n) = self.positive_sum();
                self.q_cur = if config.cumulative {
                    QueryVector(self.q0.0.iter().zip(&sum.0).map(|(q, s)| q + s).collect())
                } else if n == 0 {
                    self.q0.clone()
                } else {
                    sum
                };
            }
            StrategyKind::Average => {
                if !config.cumulative {
                    let (sum, n) = self.positive_sum();
                    self.q_cur = if n == 0 { self.q0.clone() } else { sum.scaled(1.0 / n as f64) };
                } else if config.average_mode == AverageMode::Global {
                    let (sum, n) = self.positive_sum();
                    self.q_cur = QueryVector(self.q0.0.iter().zip(&sum.0).map(|(q, s)| (q + s) / (1 + n) as f64).collect());
                } else {
                    for p in &arrival {
                        for (q, &x) in self.q_cur.0.iter_mut().zip(&p.0) {
                            *q = (*q + x as f64) / 2.0;
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

pub fn init_state(query_embedding: &DenseVector) -> Result<QueryState> {
    QueryState::new(QueryVector::from(query_embedding))
}

/// Pure form of [`QueryState::apply`].
pub fn apply_feedback(
    state: &QueryState,
    accepted: &[AcceptedParagraph],
    declined: &[String],
    config: &StrategyConfig,
    ctx: &dyn FeedbackContext,
) -> Result<QueryState> {
    let mut next = state.clone();
    next.apply(accepted, declined, config, ctx)?;
    Ok(next)
}

/// True when the candidate's tokens contain a collected keyword, or no
/// keywords have been collected yet.
pub fn keyword_prefilter(keywords: &BTreeSet<String>, candidate_tokens: &HashSet<String>) -> bool {
    keywords.is_empty() || keywords.iter().any(|k| candidate_tokens.contains(k))
}
