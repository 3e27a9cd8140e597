use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{Read, Write};

use super::{idf_value, CorpusStats, Granularity, MltParams};
use crate::binio::*;
use crate::error::{Error, Result};
use crate::search::SearchHit;

const MAGIC: &[u8; 4] = b"TFX1";
const VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexedUnit {
    pub id: String,
    pub parent: String,
    /// (term id, raw count), ascending term id.
    pub terms: Vec<(u32, u32)>,
}

/// Inverted index over documents or paragraphs.
#[derive(Debug, Clone, PartialEq)]
pub struct TfidfIndex {
    granularity: Granularity,
    units: Vec<IndexedUnit>,
    unit_ids: HashMap<String, u32>,
    vocab: Vec<String>,
    term_ids: HashMap<String, u32>,
    df: Vec<u32>,
    postings: Vec<Vec<(u32, u32)>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MltResult {
    pub hits: Vec<SearchHit>,
    /// Selected query terms with their query-side weights, best first.
    pub query_terms: Vec<(String, f64)>,
    pub diagnostic: Option<String>,
}

impl TfidfIndex {
    pub fn new(granularity: Granularity) -> Self {
        TfidfIndex {
            granularity,
            units: Vec::new(),
            unit_ids: HashMap::new(),
            vocab: Vec::new(),
            term_ids: HashMap::new(),
            df: Vec::new(),
            postings: Vec::new(),
        }
    }

    /// Adds one unit's tfidf-pipeline tokens. Only N and df change for
    /// previously added units.
    pub fn add(&mut self, unit_id: &str, parent: &str, tokens: &[String]) -> Result<()> {
        if self.unit_ids.contains_key(unit_id) {
            return Err(Error::DuplicateId(unit_id.to_string()));
        }
        let unit_ix = count_u32(self.units.len(), "units")?;
        let mut counts: BTreeMap<u32, u32> = BTreeMap::new();
        for t in tokens {
            let id = match self.term_ids.get(t) {
                Some(&id) => id,
                None => {
                    let id = count_u32(self.vocab.len(), "terms")?;
                    self.vocab.push(t.clone());
                    self.term_ids.insert(t.clone(), id);
                    self.df.push(0);
                    self.postings.push(Vec::new());
                    id
                }
            };
            *counts.entry(id).or_default() += 1;
        }
        for (&term, &count) in &counts {
            self.df[term as usize] += 1;
            self.postings[term as usize].push((unit_ix, count));
        }
        self.unit_ids.insert(unit_id.to_string(), unit_ix);
        self.units.push(IndexedUnit { id: unit_id.to_string(), parent: parent.to_string(), terms: counts.into_iter().collect() });
        Ok(())
    }

    pub fn granularity(&self) -> Granularity {
        self.granularity
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn units(&self) -> &[IndexedUnit] {
        &self.units
    }

    pub fn unit(&self, unit_id: &str) -> Option<&IndexedUnit> {
        self.unit_ids.get(unit_id).map(|&i| &self.units[i as usize])
    }

    pub fn term(&self, id: u32) -> &str {
        &self.vocab[id as usize]
    }

    pub fn term_id(&self, term: &str) -> Option<u32> {
        self.term_ids.get(term).copied()
    }

    pub fn vocabulary_len(&self) -> usize {
        self.vocab.len()
    }

    pub fn stats(&self) -> CorpusStats {
        CorpusStats { n: self.units.len(), df: self.vocab.iter().cloned().zip(self.df.iter().copied()).collect() }
    }

    pub fn idf(&self, term: &str) -> f64 {
        idf_value(self.units.len(), self.term_id(term).map_or(0, |id| self.df[id as usize]))
    }

    fn idf_of(&self, term: u32) -> f64 {
        idf_value(self.units.len(), self.df[term as usize])
    }

    /// Distinct terms of a unit, or of every unit whose parent is `id` when
    /// `id` names a document in a paragraph index.
    pub fn terms_of(&self, id: &str) -> Result<Vec<u32>> {
        if let Some(u) = self.unit(id) {
            return Ok(u.terms.iter().map(|&(t, _)| t).collect());
        }
        let mut terms: Vec<u32> =
            self.units.iter().filter(|u| u.parent == id).flat_map(|u| u.terms.iter().map(|&(t, _)| t)).collect();
        if terms.is_empty() && !self.units.iter().any(|u| u.parent == id) {
            return Err(Error::UnknownId(id.to_string()));
        }
        terms.sort_unstable();
        terms.dedup();
        Ok(terms)
    }

    /// The document's distinct terms by idf descending, ties lexicographic.
    pub fn top_idf_keywords(&self, doc_id: &str, count: usize) -> Result<Vec<String>> {
        let mut ranked: Vec<(f64, &str)> =
            self.terms_of(doc_id)?.into_iter().map(|t| (self.idf_of(t), self.term(t))).collect();
        ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
        Ok(ranked.into_iter().take(count).map(|(_, t)| t.to_string()).collect())
    }

    /// Query terms for a unit: terms whose df fraction lies in
    /// `[min_df, max_df]` and whose TF-IDF weight is positive, heaviest
    /// first (ties by term), at most `max_query_terms`.
    pub fn select_query_terms(&self, unit: &IndexedUnit, params: &MltParams) -> Vec<(u32, f64)> {
        let n = self.units.len() as f64;
        let mut selected: Vec<(u32, f64)> = unit
            .terms
            .iter()
            .filter(|&&(t, _)| {
                let frac = self.df[t as usize] as f64 / n;
                frac >= params.min_df && frac <= params.max_df
            })
            .map(|&(t, c)| (t, c as f64 * self.idf_of(t)))
            .filter(|&(_, w)| w > 0.0)
            .collect();
        selected.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| self.term(a.0).cmp(self.term(b.0))));
        selected.truncate(params.max_query_terms);
        selected
    }

    /// "More like this": scores every unit sharing a selected query term by
    /// Σ w_query(t) · w_candidate(t). Units whose parent document is in
    /// `excluded` are skipped.
    pub fn mlt_search(&self, query_unit_id: &str, params: &MltParams, excluded: &HashSet<String>, k: usize) -> Result<MltResult> {
        self.mlt_search_by(query_unit_id, params, k, |u| !excluded.contains(&u.parent))
    }

    pub fn mlt_search_by<F>(&self, query_unit_id: &str, params: &MltParams, k: usize, accept: F) -> Result<MltResult>
    where
        F: Fn(&IndexedUnit) -> bool,
    {
        params.validate()?;
        if k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        let query = self.unit(query_unit_id).ok_or_else(|| Error::UnknownId(query_unit_id.to_string()))?;
        let selected = self.select_query_terms(query, params);
        let query_terms: Vec<(String, f64)> = selected.iter().map(|&(t, w)| (self.term(t).to_string(), w)).collect();
        if selected.is_empty() {
            return Ok(MltResult {
                hits: Vec::new(),
                query_terms,
                diagnostic: Some(format!("no selectable query terms in `{query_unit_id}`")),
            });
        }

        let mut scores: HashMap<u32, f64> = HashMap::new();
        for &(term, wq) in &selected {
            let idf = self.idf_of(term);
            for &(unit, count) in &self.postings[term as usize] {
                *scores.entry(unit).or_default() += wq * (count as f64 * idf);
            }
        }
        let mut hits: Vec<(f64, &IndexedUnit)> = scores
            .into_iter()
            .map(|(u, s)| (s, &self.units[u as usize]))
            .filter(|(_, u)| accept(u))
            .collect();
        hits.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.id.cmp(&b.1.id)));
        hits.truncate(k);
        let hits = hits
            .into_iter()
            .enumerate()
            .map(|(i, (score, u))| SearchHit { unit_id: u.id.clone(), doc_id: u.parent.clone(), score, rank: i + 1 })
            .collect();
        Ok(MltResult { hits, query_terms, diagnostic: None })
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        write_u8(&mut w, VERSION)?;
        write_u8(&mut w, match self.granularity {
            Granularity::Document => 0,
            Granularity::Paragraph => 1,
        })?;
        write_u32(&mut w, count_u32(self.units.len(), "units")?)?;
        for u in &self.units {
            write_str(&mut w, &u.id)?;
            write_str(&mut w, &u.parent)?;
        }
        write_u32(&mut w, count_u32(self.vocab.len(), "terms")?)?;
        for (term, df) in self.vocab.iter().zip(&self.df) {
            write_str(&mut w, term)?;
            write_u32(&mut w, *df)?;
        }
        for list in &self.postings {
            write_u32(&mut w, count_u32(list.len(), "postings")?)?;
            for &(unit, count) in list {
                write_u32(&mut w, unit)?;
                write_u32(&mut w, count)?;
            }
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        expect_magic(&mut r, MAGIC)?;
        let version = read_u8(&mut r)?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported TFX version {version}")));
        }
        let granularity = match read_u8(&mut r)? {
            0 => Granularity::Document,
            1 => Granularity::Paragraph,
            g => return Err(Error::Format(format!("bad granularity flag {g}"))),
        };
        let n = read_u32(&mut r)? as usize;
        let mut index = TfidfIndex::new(granularity);
        for ix in 0..n {
            let id = read_str(&mut r)?;
            let parent = read_str(&mut r)?;
            if index.unit_ids.insert(id.clone(), ix as u32).is_some() {
                return Err(Error::DuplicateId(id));
            }
            index.units.push(IndexedUnit { id, parent, terms: Vec::new() });
        }
        let vocab_len = read_u32(&mut r)? as usize;
        for id in 0..vocab_len {
            let term = read_str(&mut r)?;
            let df = read_u32(&mut r)?;
            index.term_ids.insert(term.clone(), id as u32);
            index.vocab.push(term);
            index.df.push(df);
        }
        for term in 0..vocab_len {
            let len = read_u32(&mut r)? as usize;
            if len != index.df[term] as usize {
                return Err(Error::Format(format!("posting count {len} disagrees with df of `{}`", index.vocab[term])));
            }
            let mut list = Vec::with_capacity(len);
            for _ in 0..len {
                let unit = read_u32(&mut r)?;
                let count = read_u32(&mut r)?;
                let u = index.units.get_mut(unit as usize).ok_or_else(|| Error::Format(format!("posting to missing unit {unit}")))?;
                u.terms.push((term as u32, count));
                list.push((unit, count));
            }
            index.postings.push(list);
        }
        Ok(index)
    }
}
