//! Style embeddings and cosine similarity.
//!
//! Any embedder can be plugged in through [`EmbeddingProvider`]. Vectors from
//! an external model are loaded with [`load_precomputed`]; [`BaselineEmbedder`]
//! is a small built-in stand-in computed from the score itself.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{extract_features, pitch_class_profile};
use crate::jsonl;
use crate::lmx::TokenSequence;
use crate::score::Score;

#[derive(Debug, Error)]
pub enum SimilarityError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("embeddings come from different providers: {0} vs {1}")]
    ProviderMismatch(String, String),
    #[error("zero-norm embedding")]
    ZeroNorm,
    #[error("cannot embed an empty token sequence")]
    EmptySequence,
    #[error("cannot embed: {0}")]
    Analysis(#[from] crate::analysis::AnalysisError),
    #[error("no precomputed embedding for {0:?}")]
    Missing(String),
    #[error("duplicate embedding id {0:?}")]
    Duplicate(String),
    #[error("record {id:?} declares dim {declared} but has {found} values")]
    BadRecord { id: String, declared: usize, found: usize },
    #[error(transparent)]
    Jsonl(#[from] jsonl::JsonlError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleEmbedding {
    pub provider: String,
    pub vector: Vec<f64>,
}

impl StyleEmbedding {
    pub fn dim(&self) -> usize {
        self.vector.len()
    }

    pub fn norm(&self) -> f64 {
        self.vector.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

pub fn cosine_similarity(a: &StyleEmbedding, b: &StyleEmbedding) -> Result<f64, SimilarityError> {
    if a.provider != b.provider {
        return Err(SimilarityError::ProviderMismatch(a.provider.clone(), b.provider.clone()));
    }
    if a.dim() != b.dim() {
        return Err(SimilarityError::DimensionMismatch(a.dim(), b.dim()));
    }
    let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    let (na2, nb2) = (sq(&a.vector), sq(&b.vector));
    if na2 == 0.0 || nb2 == 0.0 {
        return Err(SimilarityError::ZeroNorm);
    }
    let dot: f64 = a.vector.iter().zip(&b.vector).map(|(x, y)| x * y).sum();
    Ok((dot / (na2 * nb2).sqrt()).clamp(-1.0, 1.0))
}

/// `1 − cosine similarity`.
pub fn cosine_distance(a: &StyleEmbedding, b: &StyleEmbedding) -> Result<f64, SimilarityError> {
    Ok(1.0 - cosine_similarity(a, b)?)
}

pub trait EmbeddingProvider: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    /// Must be deterministic.
    fn embed(&self, tokens: &TokenSequence, score: &Score) -> Result<StyleEmbedding, SimilarityError>;
}

pub const BASELINE_DIM: usize = 64;
const BIGRAM_BUCKETS: usize = 40;

/// Parts of the baseline embedding before the final normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineComponents {
    pub pitch_classes: [f64; 12],
    /// Token-bigram counts hashed into 40 buckets, scaled to sum to 1.
    pub bigrams: [f64; BIGRAM_BUCKETS],
    /// Difficulty features squashed with `x / (1 + |x|)`.
    pub texture: [f64; 12],
}

fn fnv1a(bytes: impl IntoIterator<Item = u8>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Pitch-class profile, hashed token bigrams and texture statistics,
/// concatenated and scaled to unit length.
#[derive(Debug, Clone, Copy, Default)]
pub struct BaselineEmbedder;

impl BaselineEmbedder {
    pub const NAME: &'static str = "baseline-64";

    pub fn components(&self, tokens: &TokenSequence, score: &Score) -> Result<BaselineComponents, SimilarityError> {
        if tokens.is_empty() {
            return Err(SimilarityError::EmptySequence);
        }
        let pitch_classes = pitch_class_profile(score).map(|p| p.weights).unwrap_or([0.0; 12]);
        let mut bigrams = [0.0; BIGRAM_BUCKETS];
        for w in tokens.tokens.windows(2) {
            let bytes = w[0].bytes().chain(std::iter::once(0x1f)).chain(w[1].bytes());
            bigrams[(fnv1a(bytes) % BIGRAM_BUCKETS as u64) as usize] += 1.0;
        }
        let total: f64 = bigrams.iter().sum();
        if total > 0.0 {
            bigrams.iter_mut().for_each(|b| *b /= total);
        }
        let texture = extract_features(score)?.values.map(|x| x / (1.0 + x.abs()));
        Ok(BaselineComponents { pitch_classes, bigrams, texture })
    }
}

impl EmbeddingProvider for BaselineEmbedder {
    fn name(&self) -> &str {
        BaselineEmbedder::NAME
    }

    fn dim(&self) -> usize {
        BASELINE_DIM
    }

    fn embed(&self, tokens: &TokenSequence, score: &Score) -> Result<StyleEmbedding, SimilarityError> {
        let c = self.components(tokens, score)?;
        let mut v: Vec<f64> = c.pitch_classes.iter().chain(&c.bigrams).chain(&c.texture).copied().collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(SimilarityError::ZeroNorm);
        }
        v.iter_mut().for_each(|x| *x /= norm);
        Ok(StyleEmbedding { provider: BaselineEmbedder::NAME.into(), vector: v })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct EmbeddingRecord {
    id: String,
    dim: usize,
    v: Vec<f64>,
}

/// Embeddings produced elsewhere, looked up by the sequence's `source_id`.
#[derive(Debug, Clone, PartialEq)]
pub struct Precomputed {
    pub provider: String,
    pub dim: usize,
    pub vectors: BTreeMap<String, StyleEmbedding>,
}

impl Precomputed {
    pub const NAME: &'static str = "precomputed";

    pub fn get(&self, id: &str) -> Option<&StyleEmbedding> {
        self.vectors.get(id)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

impl EmbeddingProvider for Precomputed {
    fn name(&self) -> &str {
        &self.provider
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, tokens: &TokenSequence, _score: &Score) -> Result<StyleEmbedding, SimilarityError> {
        let id = tokens.source_id.as_deref().unwrap_or_default();
        self.vectors.get(id).cloned().ok_or_else(|| SimilarityError::Missing(id.to_string()))
    }
}

/// Parses `{"id", "dim", "v"}` records. All records must share one dimension
/// and ids must be unique.
pub fn parse_precomputed(text: &str) -> Result<Precomputed, SimilarityError> {
    let records: Vec<EmbeddingRecord> = jsonl::parse(text)?;
    let mut vectors = BTreeMap::new();
    let mut dim = None;
    for r in records {
        if r.v.len() != r.dim {
            return Err(SimilarityError::BadRecord { id: r.id, declared: r.dim, found: r.v.len() });
        }
        match dim {
            None => dim = Some(r.dim),
            Some(d) if d != r.dim => return Err(SimilarityError::DimensionMismatch(d, r.dim)),
            _ => {}
        }
        if vectors.contains_key(&r.id) {
            return Err(SimilarityError::Duplicate(r.id));
        }
        vectors.insert(r.id, StyleEmbedding { provider: Precomputed::NAME.into(), vector: r.v });
    }
    Ok(Precomputed { provider: Precomputed::NAME.into(), dim: dim.unwrap_or(0), vectors })
}

pub fn load_precomputed(path: &Path) -> Result<Precomputed, SimilarityError> {
    parse_precomputed(&std::fs::read_to_string(path)?)
}

/// Writes embeddings as JSONL records in the given order.
pub fn embeddings_to_jsonl<'a>(items: impl IntoIterator<Item = (&'a str, &'a StyleEmbedding)>) -> String {
    let records: Vec<EmbeddingRecord> =
        items.into_iter().map(|(id, e)| EmbeddingRecord { id: id.to_string(), dim: e.dim(), v: e.vector.clone() }).collect();
    jsonl::to_string(&records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn emb(v: &[f64]) -> StyleEmbedding {
        StyleEmbedding { provider: "t".into(), vector: v.to_vec() }
    }

    #[test]
    fn basic_values() {
        assert_eq!(cosine_similarity(&emb(&[1.0, 2.0]), &emb(&[1.0, 2.0])).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&emb(&[1.0, 0.0]), &emb(&[0.0, 1.0])).unwrap(), 0.0);
        assert_eq!(cosine_distance(&emb(&[1.0, 0.0]), &emb(&[-1.0, 0.0])).unwrap(), 2.0);
    }

    #[test]
    fn errors() {
        assert!(matches!(cosine_similarity(&emb(&[1.0]), &emb(&[1.0, 0.0])), Err(SimilarityError::DimensionMismatch(1, 2))));
        assert!(matches!(cosine_similarity(&emb(&[0.0]), &emb(&[1.0])), Err(SimilarityError::ZeroNorm)));
        let other = StyleEmbedding { provider: "u".into(), vector: vec![1.0] };
        assert!(matches!(cosine_similarity(&emb(&[1.0]), &other), Err(SimilarityError::ProviderMismatch(..))));
    }

    #[test]
    fn precomputed_file() {
        let text = "{\"id\":\"a\",\"dim\":2,\"v\":[1,0]}\n{\"id\":\"b\",\"dim\":2,\"v\":[0,1]}\n{\"id\":\"c\",\"dim\":2,\"v\":[1,1]}\n";
        let p = parse_precomputed(text).unwrap();
        assert_eq!(p.len(), 3);
        assert!(p.get("d").is_none());
        let mixed = "{\"id\":\"a\",\"dim\":2,\"v\":[1,0]}\n{\"id\":\"b\",\"dim\":3,\"v\":[0,1,0]}\n";
        assert!(matches!(parse_precomputed(mixed), Err(SimilarityError::DimensionMismatch(2, 3))));
        let dup = "{\"id\":\"a\",\"dim\":1,\"v\":[1]}\n{\"id\":\"a\",\"dim\":1,\"v\":[2]}\n";
        assert!(matches!(parse_precomputed(dup), Err(SimilarityError::Duplicate(_))));
    }
}
