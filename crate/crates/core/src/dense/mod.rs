//! Embedding storage, cosine similarity, exact and HNSW search.

mod embfile;
mod hnsw;
mod store;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{preprocess, Pipeline, StopWords};
use crate::error::{Error, Result};
use crate::hashing::{fnv1a, mix};

pub use embfile::{read_embeddings, read_embeddings_jsonl, write_embeddings, write_embeddings_jsonl, EmbeddingRecord};
pub use hnsw::{HnswIndex, HnswParams};
pub use store::{DocMask, VectorStore};

/// Stored embedding (32-bit components).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DenseVector(pub Vec<f32>);

impl DenseVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt()
    }
}

impl From<Vec<f32>> for DenseVector {
    fn from(v: Vec<f32>) -> Self {
        DenseVector(v)
    }
}

/// Query-side vector in 64-bit precision. Feedback strategies build these
/// from sums of many embeddings; any non-zero magnitude is a valid query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QueryVector(pub Vec<f64>);

impl QueryVector {
    pub fn zeros(dim: usize) -> Self {
        QueryVector(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn add_assign(&mut self, v: &[f32]) {
        for (a, &b) in self.0.iter_mut().zip(v) {
            *a += b as f64;
        }
    }

    pub fn scaled(&self, c: f64) -> QueryVector {
        QueryVector(self.0.iter().map(|x| x * c).collect())
    }

    /// Unit-length copy; errors on a zero vector.
    pub(crate) fn normalized(&self) -> Result<Vec<f64>> {
        let n = self.norm();
        if !n.is_finite() || n <= 0.0 {
            return Err(Error::ZeroNorm);
        }
        Ok(self.0.iter().map(|x| x / n).collect())
    }
}

impl From<&DenseVector> for QueryVector {
    fn from(v: &DenseVector) -> Self {
        QueryVector(v.0.iter().map(|&x| x as f64).collect())
    }
}

impl From<&[f32]> for QueryVector {
    fn from(v: &[f32]) -> Self {
        QueryVector(v.iter().map(|&x| x as f64).collect())
    }
}

/// `dot(a, b) / (|a| |b|)`, accumulated in 64-bit.
pub fn cosine(a: &DenseVector, b: &DenseVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), actual: b.dim() });
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let dot: f64 = a.0.iter().zip(&b.0).map(|(&x, &y)| x as f64 * y as f64).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

pub(crate) fn dot_f64(q: &[f64], v: &[f32]) -> f64 {
    q.iter().zip(v).map(|(&a, &b)| a * b as f64).sum()
}

/// Deterministic stand-in embedder: every embedding-pipeline token maps to a
/// seeded ±1 vector, token vectors are summed and the result L2-normalized.
pub fn hash_embed(text: &str, dimension: usize, seed: u64) -> Result<DenseVector> {
    if dimension < 8 {
        return Err(Error::invalid(format!("dimension must be at least 8, got {dimension}")));
    }
    let tokens = preprocess(text, Pipeline::Embedding, &StopWords::empty());
    if tokens.is_empty() {
        return Err(Error::invalid("text has no embeddable tokens"));
    }
    let mut acc = vec![0i64; dimension];
    for token in &tokens.tokens {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(seed ^ fnv1a(token.as_bytes())));
        let mut i = 0;
        while i < dimension {
            let bits: u64 = rng.random();
            for b in 0..64.min(dimension - i) {
                acc[i + b] += if bits >> b & 1 == 1 { 1 } else { -1 };
            }
            i += 64;
        }
    }
    let norm = acc.iter().map(|&x| (x * x) as f64).sum::<f64>().sqrt();
    if norm == 0.0 {
        // tokens cancelled exactly; fall back to the first token alone
        return hash_embed(&tokens.tokens[0], dimension, seed);
    }
    Ok(DenseVector(acc.iter().map(|&x| (x as f64 / norm) as f32).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_basics() {
        let a = DenseVector(vec![0.3, -1.2, 4.0]);
        assert!((cosine(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let x = DenseVector(vec![1.0, 0.0]);
        let y = DenseVector(vec![0.0, 1.0]);
        assert_eq!(cosine(&x, &y).unwrap(), 0.0);
        assert_eq!(cosine(&x, &DenseVector(vec![-1.0, 0.0])).unwrap(), -1.0);
        assert!(matches!(cosine(&x, &DenseVector(vec![0.0, 0.0])), Err(Error::ZeroNorm)));
        assert!(matches!(cosine(&x, &a), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn hash_embed_is_deterministic_and_normalized() {
        let a = hash_embed("Quarterly profits rose sharply", 64, 7).unwrap();
        let b = hash_embed("Quarterly profits rose sharply", 64, 7).unwrap();
        assert_eq!(a, b);
        assert!((cosine(&a, &b).unwrap() - 1.0).abs() < 1e-9);
        for text in ["x", "a b c d e f", "Price: 42!", "ünïcode wörds"] {
            let v = hash_embed(text, 100, 1).unwrap();
            assert!((v.norm() - 1.0).abs() < 1e-6);
            assert_eq!(v.dim(), 100);
        }
        assert_ne!(a, hash_embed("Quarterly profits rose sharply", 64, 8).unwrap());
    }

    #[test]
    fn hash_embed_errors() {
        assert!(hash_embed("", 64, 0).is_err());
        assert!(hash_embed("42 !!", 64, 0).is_err());
        assert!(hash_embed("word", 4, 0).is_err());
    }

    #[test]
    fn overlapping_texts_are_similar() {
        let a = hash_embed("central bank raises interest rates again", 256, 3).unwrap();
        let b = hash_embed("central bank raises interest rates", 256, 3).unwrap();
        let c = hash_embed("football club wins league title", 256, 3).unwrap();
        assert!(cosine(&a, &b).unwrap() > 0.8);
        assert!(cosine(&a, &c).unwrap().abs() < 0.3);
    }

    #[test]
    fn disjoint_token_sets_are_near_orthogonal() {
        // 1,000 random pairs of disjoint 5-token texts at dimension 512
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut worst = 0f64;
        for pair in 0..1000 {
            let seed: u64 = rng.random();
            let left: Vec<String> = (0..5).map(|i| format!("L{pair}x{i}y{}", rng.random::<u32>())).collect();
            let right: Vec<String> = (0..5).map(|i| format!("R{pair}x{i}y{}", rng.random::<u32>())).collect();
            let a = hash_embed(&left.join(" "), 512, seed).unwrap();
            let b = hash_embed(&right.join(" "), 512, seed).unwrap();
            worst = worst.max(cosine(&a, &b).unwrap().abs());
        }
        assert!(worst < 0.2, "max |cosine| over disjoint pairs = {worst}");
    }

    #[test]
    fn query_vector_normalization() {
        assert!(QueryVector::zeros(3).normalized().is_err());
        let q = QueryVector(vec![3.0, 4.0]);
        assert_eq!(q.normalized().unwrap(), vec![0.6, 0.8]);
    }
}
