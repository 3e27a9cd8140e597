use std::collections::HashSet;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::Result;

static ENGLISH_STOPWORDS: &str = include_str!("../../data/stopwords-en.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pipeline {
    /// Lowercased, stop words and numbers removed.
    Tfidf,
    /// Numbers and special characters removed, case preserved.
    Embedding,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenList {
    pub tokens: Vec<String>,
    pub pipeline: Pipeline,
}

impl TokenList {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn joined(&self) -> String {
        self.tokens.join(" ")
    }
}

/// Stop word set. Entries are normalized with the same character filter the
/// tfidf pipeline applies to tokens, so `don't` in a list matches `dont`.
#[derive(Debug, Clone, Default)]
pub struct StopWords {
    words: HashSet<String>,
}

impl StopWords {
    pub fn empty() -> Self {
        Self::default()
    }

    /// The bundled English list (stopwords-iso).
    pub fn english() -> Self {
        Self::parse_str(ENGLISH_STOPWORDS)
    }

    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let words = words
            .into_iter()
            .filter_map(|w| {
                let w = normalize_tfidf_token(w.as_ref());
                (!w.is_empty()).then_some(w)
            })
            .collect();
        StopWords { words }
    }

    /// One word per line; blank lines and `#` comments are ignored.
    pub fn from_reader(reader: impl BufRead) -> Result<Self> {
        let mut words = Vec::new();
        for line in reader.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            words.push(line.to_string());
        }
        Ok(Self::from_words(words))
    }

    fn parse_str(text: &str) -> Self {
        Self::from_words(
            text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

fn keep_alphanumeric(token: &str) -> String {
    token.chars().filter(|c| c.is_alphanumeric()).collect()
}

fn normalize_tfidf_token(token: &str) -> String {
    // lowercase first: some lowercase mappings emit combining marks
    keep_alphanumeric(&token.to_lowercase())
}

fn is_number(token: &str) -> bool {
    token.chars().all(|c| c.is_numeric())
}

/// Splits on Unicode whitespace, then filters characters per pipeline.
pub fn preprocess(text: &str, pipeline: Pipeline, stopwords: &StopWords) -> TokenList {
    let tokens = text
        .split_whitespace()
        .filter_map(|raw| {
            let token = match pipeline {
                Pipeline::Tfidf => normalize_tfidf_token(raw),
                Pipeline::Embedding => keep_alphanumeric(raw),
            };
            if token.is_empty() || is_number(&token) {
                return None;
            }
            if pipeline == Pipeline::Tfidf && stopwords.contains(&token) {
                return None;
            }
            Some(token)
        })
        .collect();
    TokenList { tokens, pipeline }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tfidf_pipeline_drops_stopwords_and_numbers() {
        let sw = StopWords::from_words(["the", "had"]);
        let out = preprocess("The patient had 3 visits", Pipeline::Tfidf, &sw);
        assert_eq!(out.tokens, vec!["patient", "visits"]);
    }

    #[test]
    fn empty_input() {
        let out = preprocess("", Pipeline::Tfidf, &StopWords::english());
        assert!(out.is_empty());
        assert!(preprocess("  \t\n", Pipeline::Embedding, &StopWords::empty()).is_empty());
    }

    #[test]
    fn embedding_pipeline_keeps_case() {
        let out = preprocess("Price: 42!", Pipeline::Embedding, &StopWords::empty());
        assert_eq!(out.tokens, vec!["Price"]);
        // stop words are not applied on the embedding side
        let out = preprocess("The Cat", Pipeline::Embedding, &StopWords::english());
        assert_eq!(out.tokens, vec!["The", "Cat"]);
    }

    #[test]
    fn mixed_alphanumerics_survive() {
        let out = preprocess("3rd-quarter 1998", Pipeline::Tfidf, &StopWords::empty());
        assert_eq!(out.tokens, vec!["3rdquarter"]);
    }

    #[test]
    fn stopword_file_comments() {
        let text = "# header\nthe\n\n  And \n#x\n";
        let sw = StopWords::from_reader(text.as_bytes()).unwrap();
        assert_eq!(sw.len(), 2);
        assert!(sw.contains("and"));
        assert!(!sw.contains("x"));
    }

    #[test]
    fn bundled_list_loads() {
        let sw = StopWords::english();
        assert!(sw.len() > 1000);
        assert!(sw.contains("the"));
        assert!(sw.contains("dont"));
    }

    proptest! {
        #[test]
        fn pipelines_are_idempotent(text in "[ a-zA-Z0-9.,!?'éß-]{0,80}") {
            let sw = StopWords::english();
            for p in [Pipeline::Tfidf, Pipeline::Embedding] {
                let once = preprocess(&text, p, &sw);
                let twice = preprocess(&once.joined(), p, &sw);
                prop_assert_eq!(once, twice);
            }
        }

        #[test]
        fn tfidf_output_is_lowercase_without_numbers(text in "\\PC{0,60}") {
            let out = preprocess(&text, Pipeline::Tfidf, &StopWords::english());
            for t in &out.tokens {
                prop_assert_eq!(t.to_lowercase(), t.clone());
                prop_assert!(!t.chars().all(char::is_numeric));
                prop_assert!(!StopWords::english().contains(t));
            }
        }
    }
}
