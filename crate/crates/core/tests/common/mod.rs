#![allow(dead_code)]

use std::collections::HashSet;

use recallfeed::corpus::SplitName;
use recallfeed::engine::Engine;
use recallfeed::synthetic::{SyntheticConfig, SyntheticCorpus};
use recallfeed::tfidf::Granularity;

pub fn corpus(config: SyntheticConfig) -> (SyntheticCorpus, Engine) {
    let syn = SyntheticCorpus::generate(&config).unwrap();
    let engine = Engine::new(syn.vector_store().unwrap()).with_tfidf(syn.tfidf_index(Granularity::Document).unwrap());
    (syn, engine)
}

pub fn small(seed: u64) -> (SyntheticCorpus, Engine) {
    corpus(SyntheticConfig { topics: 3, docs_per_topic: 60, seed, ..Default::default() })
}

/// Documents of `topic` in the synthetic corpus.
pub fn members(syn: &SyntheticCorpus, topic: &str) -> HashSet<String> {
    syn.assignment(SplitName::Test).topics[topic].iter().cloned().collect()
}

pub fn topic_of(syn: &SyntheticCorpus, doc: &str) -> String {
    syn.corpus.get(doc).unwrap().topics.iter().next().unwrap().clone()
}
