use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::CorpusStore;
use crate::error::{Error, Result};
use crate::hashing::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Validation,
    Test,
    Ambiguous,
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitName::Train => "train",
            SplitName::Validation => "validation",
            SplitName::Test => "test",
            SplitName::Ambiguous => "ambiguous",
        })
    }
}

impl FromStr for SplitName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitName::Train),
            "validation" => Ok(SplitName::Validation),
            "test" => Ok(SplitName::Test),
            "ambiguous" => Ok(SplitName::Ambiguous),
            other => Err(Error::invalid(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub split: SplitName,
    /// Topic code → sampled document ids (store order).
    pub topics: BTreeMap<String, Vec<String>>,
    pub seed: u64,
}

impl SplitAssignment {
    pub fn documents(&self) -> impl Iterator<Item = (&str, &str)> {
        self.topics.iter().flat_map(|(t, ids)| ids.iter().map(move |d| (d.as_str(), t.as_str())))
    }

    pub fn doc_count(&self) -> usize {
        self.topics.values().map(Vec::len).sum()
    }

    /// Document → topic label map.
    pub fn labels(&self) -> BTreeMap<String, String> {
        self.documents().map(|(d, t)| (d.to_string(), t.to_string())).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSet {
    pub seed: u64,
    pub per_topic: usize,
    pub splits: Vec<SplitAssignment>,
}

impl SplitSet {
    pub fn get(&self, name: SplitName) -> Option<&SplitAssignment> {
        self.splits.iter().find(|s| s.split == name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleConfig {
    pub per_topic: usize,
    pub seed: u64,
    /// Number of mutually unrelated topics shared out over train/validation/test.
    pub unrelated_topics: usize,
    /// Explicit unrelated topic list; sampled from eligible topics when empty.
    pub topics: Vec<String>,
    pub ambiguous_parent: Option<String>,
    pub ambiguous_count: usize,
    /// Explicit ambiguous topics; sampled from the parent's children when empty.
    pub ambiguous_topics: Vec<String>,
    /// Extra child → parent relations on top of documents' `parent_topics`.
    pub hierarchy: BTreeMap<String, String>,
    /// Take every document of a short topic instead of failing.
    pub allow_short_topics: bool,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig {
            per_topic: 300,
            seed: 0,
            unrelated_topics: 15,
            topics: Vec::new(),
            ambiguous_parent: None,
            ambiguous_count: 4,
            ambiguous_topics: Vec::new(),
            hierarchy: BTreeMap::new(),
            allow_short_topics: false,
        }
    }
}

struct TopicGraph {
    parents: BTreeMap<String, BTreeSet<String>>,
}

impl TopicGraph {
    fn build(store: &CorpusStore, extra: &BTreeMap<String, String>) -> Self {
        let mut parents: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for (c, p) in extra {
            parents.entry(c.clone()).or_default().insert(p.clone());
        }
        for d in store.documents() {
            for t in d.topics.iter().filter(|t| !d.parent_topics.contains(*t)) {
                for p in &d.parent_topics {
                    parents.entry(t.clone()).or_default().insert(p.clone());
                }
            }
        }
        TopicGraph { parents }
    }

    fn parents_of(&self, t: &str) -> impl Iterator<Item = &String> {
        self.parents.get(t).into_iter().flatten()
    }

    fn children_of(&self, p: &str) -> Vec<String> {
        self.parents.iter().filter(|(_, ps)| ps.contains(p)).map(|(c, _)| c.clone()).collect()
    }

    fn related(&self, a: &str, b: &str) -> bool {
        let pa: BTreeSet<&String> = self.parents_of(a).collect();
        pa.iter().any(|p| p.as_str() == b)
            || self.parents_of(b).any(|p| p == a || pa.contains(p))
    }
}

/// Draws seeded per-topic document samples: `unrelated_topics` topics dealt
/// into train/validation/test, plus an ambiguous split of sibling topics when
/// `ambiguous_parent` is set. Each sampled document carries exactly one of
/// the selected topics, so topic labels are unambiguous.
pub fn sample_splits(store: &CorpusStore, config: &SampleConfig) -> Result<SplitSet> {
    if config.per_topic == 0 {
        return Err(Error::invalid("per_topic must be at least 1"));
    }
    let graph = TopicGraph::build(store, &config.hierarchy);
    let members = store.topic_members();
    let size_of = |t: &str| members.get(t).map_or(0, Vec::len);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "topics"));

    let ambiguous: Vec<String> = match &config.ambiguous_parent {
        None => Vec::new(),
        Some(parent) if !config.ambiguous_topics.is_empty() => {
            for t in &config.ambiguous_topics {
                if !graph.parents_of(t).any(|p| p == parent) {
                    return Err(Error::invalid(format!("topic {t} is not a child of {parent}")));
                }
            }
            config.ambiguous_topics.clone()
        }
        Some(parent) => {
            let mut children = graph.children_of(parent);
            children.shuffle(&mut rng);
            let eligible: Vec<String> = children
                .into_iter()
                .filter(|c| config.allow_short_topics || size_of(c) >= config.per_topic)
                .take(config.ambiguous_count)
                .collect();
            if eligible.len() < config.ambiguous_count {
                return Err(Error::Insufficient(format!(
                    "parent topic {parent} has {} child topics with at least {} documents, need {}",
                    eligible.len(),
                    config.per_topic,
                    config.ambiguous_count
                )));
            }
            eligible
        }
    };

    let unrelated: Vec<String> = if !config.topics.is_empty() {
        config.topics.clone()
    } else {
        let excluded: HashSet<&str> = ambiguous
            .iter()
            .map(String::as_str)
            .chain(config.ambiguous_parent.as_deref())
            .collect();
        let mut candidates: Vec<&str> = members
            .keys()
            .copied()
            .filter(|t| !excluded.contains(t))
            .filter(|t| config.allow_short_topics || size_of(t) >= config.per_topic)
            .collect();
        candidates.shuffle(&mut rng);
        let mut chosen: Vec<String> = Vec::new();
        for c in candidates {
            if chosen.len() == config.unrelated_topics {
                break;
            }
            let clashes = chosen.iter().any(|x| graph.related(x, c))
                || ambiguous.iter().any(|x| graph.related(x, c));
            if !clashes {
                chosen.push(c.to_string());
            }
        }
        if chosen.len() < config.unrelated_topics {
            return Err(Error::Insufficient(format!(
                "found {} mutually unrelated topics with at least {} documents, need {}",
                chosen.len(),
                config.per_topic,
                config.unrelated_topics
            )));
        }
        chosen
    };

    let selected: BTreeSet<&str> = unrelated.iter().chain(&ambiguous).map(String::as_str).collect();
    if selected.len() != unrelated.len() + ambiguous.len() {
        return Err(Error::invalid("a topic is listed in more than one split"));
    }

    let sample_topic = |topic: &str| -> Result<Vec<String>> {
        let mut pool: Vec<(usize, &str)> = store
            .documents()
            .iter()
            .enumerate()
            .filter(|(_, d)| d.topics.contains(topic))
            .filter(|(_, d)| d.topics.iter().filter(|t| selected.contains(t.as_str())).count() == 1)
            .map(|(i, d)| (i, d.doc_id.as_str()))
            .collect();
        if pool.len() < config.per_topic && !config.allow_short_topics {
            return Err(Error::Insufficient(format!(
                "topic {topic} has {} usable documents, need {}",
                pool.len(),
                config.per_topic
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, topic));
        pool.shuffle(&mut rng);
        pool.truncate(config.per_topic);
        pool.sort_unstable();
        Ok(pool.into_iter().map(|(_, id)| id.to_string()).collect())
    };

    let n = unrelated.len();
    let base = n / 3;
    let sizes = [n - 2 * base, base, base];
    let mut splits = Vec::new();
    let mut offset = 0;
    for (name, size) in [SplitName::Train, SplitName::Validation, SplitName::Test].into_iter().zip(sizes) {
        let mut topics = BTreeMap::new();
        for t in &unrelated[offset..offset + size] {
            topics.insert(t.clone(), sample_topic(t)?);
        }
        offset += size;
        splits.push(SplitAssignment { split: name, topics, seed: config.seed });
    }
    if !ambiguous.is_empty() {
        let mut topics = BTreeMap::new();
        for t in &ambiguous {
            topics.insert(t.clone(), sample_topic(t)?);
        }
        splits.push(SplitAssignment { split: SplitName::Ambiguous, topics, seed: config.seed });
    }
    Ok(SplitSet { seed: config.seed, per_topic: config.per_topic, splits })
}
