//! Seeded synthetic corpora: Gaussian topic clusters with matching topic
//! vocabulary, for experiments without licensed data.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::corpus::{build_paragraphs, preprocess, CorpusStore, Document, Pipeline, SplitAssignment, SplitName, StopWords};
use crate::dense::{EmbeddingRecord, VectorStore};
use crate::error::{Error, Result};
use crate::hashing::derive_seed;
use crate::tfidf::{Granularity, TfidfIndex};

const SENTENCES_PER_PARAGRAPH: usize = 3;
const WORDS_PER_SENTENCE: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub topics: usize,
    pub docs_per_topic: usize,
    pub paragraphs_per_doc: usize,
    pub dim: usize,
    /// Weight of the direction all topic centroids share; higher means
    /// more overlap between topics.
    pub shared_weight: f64,
    /// Spread of documents around their topic centroid.
    pub doc_noise: f64,
    /// Spread of paragraphs around their document.
    pub paragraph_noise: f64,
    pub topic_vocabulary: usize,
    pub shared_vocabulary: usize,
    /// Probability that a word is drawn from the topic vocabulary.
    pub topic_word_rate: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            topics: 5,
            docs_per_topic: 300,
            paragraphs_per_doc: 1,
            dim: 64,
            shared_weight: 1.0,
            doc_noise: 1.0,
            paragraph_noise: 0.5,
            topic_vocabulary: 60,
            shared_vocabulary: 600,
            topic_word_rate: 0.25,
            seed: 0,
        }
    }
}

pub struct SyntheticCorpus {
    pub config: SyntheticConfig,
    pub corpus: CorpusStore,
    pub embeddings: Vec<EmbeddingRecord>,
}

pub fn topic_name(t: usize) -> String {
    format!("SYN{t:02}")
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal) * scale).collect()
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

impl SyntheticCorpus {
    pub fn generate(config: &SyntheticConfig) -> Result<Self> {
        if config.topics == 0 || config.docs_per_topic == 0 || config.paragraphs_per_doc == 0 {
            return Err(Error::invalid("topics, docs_per_topic and paragraphs_per_doc must be positive"));
        }
        if config.dim < 2 || config.topic_vocabulary == 0 || config.shared_vocabulary == 0 {
            return Err(Error::invalid("dim and vocabulary sizes too small"));
        }
        let dim = config.dim;
        let per_axis = 1.0 / (dim as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "centroids"));
        let shared = unit(gaussian(&mut rng, dim, 1.0));
        let centroids: Vec<Vec<f64>> = (0..config.topics)
            .map(|_| {
                let own = unit(gaussian(&mut rng, dim, 1.0));
                unit(own.iter().zip(&shared).map(|(o, s)| o + config.shared_weight * s).collect())
            })
            .collect();

        let mut corpus = CorpusStore::new();
        let mut embeddings = Vec::new();
        for (t, centroid) in centroids.iter().enumerate() {
            let topic = topic_name(t);
            for i in 0..config.docs_per_topic {
                let doc_id = format!("syn{t:02}-{i:04}");
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &doc_id));
                let center: Vec<f64> =
                    centroid.iter().zip(gaussian(&mut rng, dim, config.doc_noise * per_axis)).map(|(c, n)| c + n).collect();
                let mut sentences = Vec::new();
                for p in 0..config.paragraphs_per_doc {
                    let v: Vec<f32> = center
                        .iter()
                        .zip(gaussian(&mut rng, dim, config.paragraph_noise * per_axis))
                        .map(|(c, n)| (c + n) as f32)
                        .collect();
                    embeddings.push(EmbeddingRecord { id: crate::corpus::paragraph_id(&doc_id, p), vector: v });
                    for _ in 0..SENTENCES_PER_PARAGRAPH {
                        let words: Vec<String> = (0..WORDS_PER_SENTENCE)
                            .map(|_| {
                                if rng.random_bool(config.topic_word_rate) {
                                    format!("topic{t}term{}", rng.random_range(0..config.topic_vocabulary))
                                } else {
                                    format!("common{}", rng.random_range(0..config.shared_vocabulary))
                                }
                            })
                            .collect();
                        sentences.push(words.join(" "));
                    }
                }
                corpus.insert(Document::new(doc_id, [topic.clone()], sentences))?;
            }
        }
        Ok(SyntheticCorpus { config: config.clone(), corpus, embeddings })
    }

    pub fn vector_store(&self) -> Result<VectorStore> {
        let mut store = VectorStore::new(self.config.dim);
        for r in &self.embeddings {
            store.insert(&r.id, crate::corpus::parent_of(&r.id), &r.vector)?;
        }
        Ok(store)
    }

    pub fn tfidf_index(&self, granularity: Granularity) -> Result<TfidfIndex> {
        let stop = StopWords::english();
        let mut index = TfidfIndex::new(granularity);
        for doc in self.corpus.documents() {
            match granularity {
                Granularity::Document => {
                    let tokens = preprocess(&doc.text(), Pipeline::Tfidf, &stop).tokens;
                    index.add(&doc.doc_id, &doc.doc_id, &tokens)?;
                }
                Granularity::Paragraph => {
                    for p in build_paragraphs(doc, SENTENCES_PER_PARAGRAPH)?.paragraphs {
                        let tokens = preprocess(&p.text, Pipeline::Tfidf, &stop).tokens;
                        index.add(&p.para_id, &p.parent_id, &tokens)?;
                    }
                }
            }
        }
        Ok(index)
    }

    /// Every document, grouped by topic, as a split.
    pub fn assignment(&self, split: SplitName) -> SplitAssignment {
        let mut topics: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for doc in self.corpus.documents() {
            for t in &doc.topics {
                topics.entry(t.clone()).or_default().push(doc.doc_id.clone());
            }
        }
        SplitAssignment { split, topics, seed: self.config.seed }
    }
}
