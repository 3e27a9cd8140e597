//! Recall-oriented document retrieval with iterative relevance feedback.
//!
//! Documents are split into paragraphs, indexed for TF-IDF "more like this"
//! search and dense-vector search, and ranked at document level. Review
//! sessions re-rank the remaining documents after every batch of
//! accept/decline judgments without ever dropping unreviewed documents.

mod binio;
pub mod corpus;
pub mod dense;
pub mod engine;
pub mod error;
pub mod feedback;
pub mod hashing;
pub mod par;
pub mod ranking;
pub mod search;
pub mod service;
pub mod simulator;
pub mod synthetic;
pub mod tfidf;

pub use error::{Error, Result};
pub use search::SearchHit;
