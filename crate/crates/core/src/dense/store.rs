use std::collections::{HashMap, HashSet};

use super::{dot_f64, DenseVector, QueryVector};
use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::search::{by_score_then_id, top_k_by, SearchHit};

/// Flat storage of same-dimension embeddings with their parent documents.
///
/// Units of one document are kept in insertion order, which callers use as
/// paragraph ordinal order.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorStore {
    dim: usize,
    ids: Vec<String>,
    id_index: HashMap<String, u32>,
    unit_doc: Vec<u32>,
    docs: Vec<String>,
    doc_index: HashMap<String, u32>,
    doc_units: Vec<Vec<u32>>,
    data: Vec<f32>,
    norms: Vec<f64>,
}

/// Per-document admission mask; `true` means the document may be returned.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocMask(pub(crate) Vec<bool>);

impl DocMask {
    pub fn allows(&self, doc: u32) -> bool {
        self.0[doc as usize]
    }

    pub fn exclude(&mut self, doc: u32) {
        self.0[doc as usize] = false;
    }

    pub fn allowed_count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }
}

impl VectorStore {
    pub fn new(dim: usize) -> Self {
        VectorStore {
            dim,
            ids: Vec::new(),
            id_index: HashMap::new(),
            unit_doc: Vec::new(),
            docs: Vec::new(),
            doc_index: HashMap::new(),
            doc_units: Vec::new(),
            data: Vec::new(),
            norms: Vec::new(),
        }
    }

    pub fn insert(&mut self, unit_id: &str, doc_id: &str, vector: &[f32]) -> Result<u32> {
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, actual: vector.len() });
        }
        if self.id_index.contains_key(unit_id) {
            return Err(Error::DuplicateId(unit_id.to_string()));
        }
        let norm = vector.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt();
        if !norm.is_finite() || norm <= 0.0 {
            return Err(Error::ZeroNorm);
        }
        let unit = u32::try_from(self.ids.len()).map_err(|_| Error::invalid("too many vectors"))?;
        let doc = match self.doc_index.get(doc_id) {
            Some(&d) => d,
            None => {
                let d = self.docs.len() as u32;
                self.docs.push(doc_id.to_string());
                self.doc_index.insert(doc_id.to_string(), d);
                self.doc_units.push(Vec::new());
                d
            }
        };
        self.ids.push(unit_id.to_string());
        self.id_index.insert(unit_id.to_string(), unit);
        self.unit_doc.push(doc);
        self.doc_units[doc as usize].push(unit);
        self.data.extend_from_slice(vector);
        self.norms.push(norm);
        Ok(unit)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn doc_count(&self) -> usize {
        self.docs.len()
    }

    pub fn unit_index(&self, unit_id: &str) -> Option<u32> {
        self.id_index.get(unit_id).copied()
    }

    pub fn doc_index(&self, doc_id: &str) -> Option<u32> {
        self.doc_index.get(doc_id).copied()
    }

    pub fn unit_id(&self, unit: u32) -> &str {
        &self.ids[unit as usize]
    }

    pub fn doc_id(&self, doc: u32) -> &str {
        &self.docs[doc as usize]
    }

    pub fn doc_of(&self, unit: u32) -> u32 {
        self.unit_doc[unit as usize]
    }

    pub fn units_of(&self, doc: u32) -> &[u32] {
        &self.doc_units[doc as usize]
    }

    pub fn vector(&self, unit: u32) -> &[f32] {
        let start = unit as usize * self.dim;
        &self.data[start..start + self.dim]
    }

    pub fn norm(&self, unit: u32) -> f64 {
        self.norms[unit as usize]
    }

    pub fn get(&self, unit_id: &str) -> Option<DenseVector> {
        self.unit_index(unit_id).map(|u| DenseVector(self.vector(u).to_vec()))
    }

    /// Mask admitting everything except the named documents. Unknown ids
    /// are ignored (they cannot be returned anyway).
    pub fn mask_excluding<'a>(&self, excluded: impl IntoIterator<Item = &'a String>) -> DocMask {
        let mut mask = DocMask(vec![true; self.docs.len()]);
        for id in excluded {
            if let Some(d) = self.doc_index(id) {
                mask.exclude(d);
            }
        }
        mask
    }

    pub fn full_mask(&self) -> DocMask {
        DocMask(vec![true; self.docs.len()])
    }

    /// Cosine against a pre-normalized query.
    pub(crate) fn score(&self, unit_query: &[f64], unit: u32) -> f64 {
        (dot_f64(unit_query, self.vector(unit)) / self.norms[unit as usize]).clamp(-1.0, 1.0)
    }

    pub(crate) fn hit(&self, unit: u32, score: f64, rank: usize) -> SearchHit {
        SearchHit {
            unit_id: self.ids[unit as usize].clone(),
            doc_id: self.docs[self.unit_doc[unit as usize] as usize].clone(),
            score,
            rank,
        }
    }

    pub(crate) fn check_query(&self, query: &QueryVector) -> Result<Vec<f64>> {
        if query.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, actual: query.dim() });
        }
        query.normalized()
    }

    /// Exhaustive cosine search over units whose document is not excluded.
    pub fn exact_search(&self, query: &QueryVector, excluded: &HashSet<String>, k: usize) -> Result<Vec<SearchHit>> {
        self.exact_search_masked(query, &self.mask_excluding(excluded), k, Execution::default())
    }

    pub fn exact_search_masked(&self, query: &QueryVector, mask: &DocMask, k: usize, exec: Execution) -> Result<Vec<SearchHit>> {
        if k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        let q = self.check_query(query)?;
        let scored = par::filter_map_range(exec, self.len(), |u| {
            let u = u as u32;
            mask.allows(self.unit_doc[u as usize]).then(|| (self.score(&q, u), u))
        });
        let top = top_k_by(scored, k, |a, b| by_score_then_id((a.0, self.unit_id(a.1)), (b.0, self.unit_id(b.1))));
        Ok(top.into_iter().enumerate().map(|(i, (s, u))| self.hit(u, s, i + 1)).collect())
    }
}
