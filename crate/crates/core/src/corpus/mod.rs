//! Documents, paragraphs and topic-labelled samples.

mod ingest;
mod preprocess;
mod split;

use std::borrow::Cow;
use std::collections::{BTreeSet, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use ingest::{ingest_corpus, ingest_into, parse_topic_hierarchy, InputFormat};
pub use preprocess::{preprocess, Pipeline, StopWords, TokenList};
pub use split::{sample_splits, SampleConfig, SplitAssignment, SplitName, SplitSet};

/// Default number of adjacent sentences per paragraph.
pub const DEFAULT_GROUP_SIZE: usize = 3;

/// Word limit of the sentence encoders; longer paragraphs are truncated
/// before embedding.
pub const EMBEDDING_WORD_LIMIT: usize = 384;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    #[serde(rename = "id")]
    pub doc_id: String,
    pub topics: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub parent_topics: BTreeSet<String>,
    pub sentences: Vec<String>,
}

impl Document {
    pub fn new<I, S>(doc_id: impl Into<String>, topics: I, sentences: Vec<String>) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Document {
            doc_id: doc_id.into(),
            topics: topics.into_iter().map(Into::into).collect(),
            parent_topics: BTreeSet::new(),
            sentences,
        }
    }

    pub fn text(&self) -> String {
        self.sentences.join(" ")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Paragraph {
    pub para_id: String,
    pub parent_id: String,
    pub ordinal: usize,
    pub text: String,
    pub word_count: usize,
}

impl Paragraph {
    /// Text handed to an embedder: the first `limit` words, plus whether
    /// anything was cut.
    pub fn embedding_text(&self, limit: usize) -> (Cow<'_, str>, bool) {
        if self.word_count <= limit {
            return (Cow::Borrowed(&self.text), false);
        }
        let cut: Vec<&str> = self.text.split_whitespace().take(limit).collect();
        (Cow::Owned(cut.join(" ")), true)
    }
}

/// Paragraph id for the `ordinal`-th paragraph of `doc_id`.
pub fn paragraph_id(doc_id: &str, ordinal: usize) -> String {
    format!("{doc_id}#{ordinal}")
}

/// Parent document id encoded in a paragraph id. Ids without a `#` name a
/// whole document.
pub fn parent_of(unit_id: &str) -> &str {
    match unit_id.rfind('#') {
        Some(pos) if unit_id[pos + 1..].bytes().all(|b| b.is_ascii_digit()) && pos + 1 < unit_id.len() => {
            &unit_id[..pos]
        }
        _ => unit_id,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segmented {
    pub paragraphs: Vec<Paragraph>,
    /// Set when the document had no sentences.
    pub empty_document: bool,
}

/// Groups consecutive sentences into non-overlapping paragraphs of
/// `group_size`; a shorter final group keeps the remainder.
pub fn build_paragraphs(doc: &Document, group_size: usize) -> Result<Segmented> {
    if group_size == 0 {
        return Err(Error::invalid("group_size must be at least 1"));
    }
    if doc.sentences.is_empty() {
        log::warn!("document {} has no sentences", doc.doc_id);
        return Ok(Segmented { paragraphs: Vec::new(), empty_document: true });
    }
    let paragraphs = doc
        .sentences
        .chunks(group_size)
        .enumerate()
        .map(|(ordinal, group)| {
            let text = group.join(" ");
            let word_count = text.split_whitespace().count();
            Paragraph {
                para_id: paragraph_id(&doc.doc_id, ordinal),
                parent_id: doc.doc_id.clone(),
                ordinal,
                text,
                word_count,
            }
        })
        .collect();
    Ok(Segmented { paragraphs, empty_document: false })
}

/// Immutable-after-build document collection in insertion order.
#[derive(Debug, Clone, Default)]
pub struct CorpusStore {
    docs: Vec<Document>,
    by_id: HashMap<String, usize>,
}

impl CorpusStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, doc: Document) -> Result<()> {
        if self.by_id.contains_key(&doc.doc_id) {
            return Err(Error::DuplicateId(doc.doc_id));
        }
        self.by_id.insert(doc.doc_id.clone(), self.docs.len());
        self.docs.push(doc);
        Ok(())
    }

    pub fn from_documents(docs: impl IntoIterator<Item = Document>) -> Result<Self> {
        let mut store = Self::new();
        for d in docs {
            store.insert(d)?;
        }
        Ok(store)
    }

    pub fn get(&self, doc_id: &str) -> Option<&Document> {
        self.by_id.get(doc_id).map(|&i| &self.docs[i])
    }

    pub fn documents(&self) -> &[Document] {
        &self.docs
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    /// Every topic code with the ids of documents carrying it, in store order.
    pub fn topic_members(&self) -> std::collections::BTreeMap<&str, Vec<&str>> {
        let mut out: std::collections::BTreeMap<&str, Vec<&str>> = Default::default();
        for d in &self.docs {
            for t in &d.topics {
                out.entry(t.as_str()).or_default().push(d.doc_id.as_str());
            }
        }
        out
    }

    /// Keeps only the listed documents, in store order.
    pub fn subset<'a>(&self, ids: impl IntoIterator<Item = &'a str>) -> Result<CorpusStore> {
        let wanted: BTreeSet<&str> = ids.into_iter().collect();
        for id in &wanted {
            if !self.by_id.contains_key(*id) {
                return Err(Error::UnknownId(id.to_string()));
            }
        }
        CorpusStore::from_documents(self.docs.iter().filter(|d| wanted.contains(d.doc_id.as_str())).cloned())
    }

    pub fn write_jsonl(&self, mut out: impl Write) -> Result<()> {
        for d in &self.docs {
            serde_json::to_writer(&mut out, d)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}
