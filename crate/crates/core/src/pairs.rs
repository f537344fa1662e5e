//! Mining (harder, easier) variation pairs.
//!
//! The random strategy keeps every pair of variations of a piece whose
//! predicted levels differ by at least `min_gap`. The filtered strategy
//! first drops the least confident variations across the whole corpus, then
//! keeps only the most style-similar share of each piece's pairs.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{confidence_filter, threshold_filter, ClassifierError, DifficultyPosterior, Level};
use crate::jsonl;
use crate::lmx::{TokenSequence, VocabError, Vocabulary};
use crate::similarity::{cosine_similarity, SimilarityError, StyleEmbedding};

#[derive(Debug, Error)]
pub enum MiningError {
    #[error("variation {0:?} has no difficulty posterior")]
    MissingPosterior(String),
    #[error("variation {0:?} has no style embedding")]
    MissingEmbedding(String),
    #[error("keep fraction {0} outside (0, 1]")]
    InvalidKeepFraction(f64),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
    #[error(transparent)]
    Vocab(#[from] VocabError),
    #[error(transparent)]
    Jsonl(#[from] jsonl::JsonlError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variation {
    pub piece: String,
    pub id: String,
    pub tokens: TokenSequence,
    pub posterior: Option<DifficultyPosterior>,
    pub embedding: Option<StyleEmbedding>,
}

impl Variation {
    fn level(&self) -> Result<Level, MiningError> {
        self.posterior.as_ref().map(|p| p.label).ok_or_else(|| MiningError::MissingPosterior(self.id.clone()))
    }

    fn embedding(&self) -> Result<&StyleEmbedding, MiningError> {
        self.embedding.as_ref().ok_or_else(|| MiningError::MissingEmbedding(self.id.clone()))
    }
}

/// A mined pair; `hard` and `easy` index into the variation slice given to
/// [`mine`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationPair {
    pub piece: String,
    pub hard: usize,
    pub easy: usize,
    pub hard_level: Level,
    pub easy_level: Level,
    pub gap: u8,
    pub similarity: f64,
}

/// All `(hard, easy)` index pairs with `level[hard] − level[easy] ≥ max(1, min_gap)`,
/// in row-major order of `(hard, easy)`.
pub fn enumerate_pairs(levels: &[Level], min_gap: u8) -> Vec<(usize, usize)> {
    let min_gap = min_gap.max(1) as i16;
    let mut out = Vec::new();
    for (i, a) in levels.iter().enumerate() {
        for (j, b) in levels.iter().enumerate() {
            if a.get() as i16 - b.get() as i16 >= min_gap {
                out.push((i, j));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Random,
    Filtered,
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Strategy, String> {
        match s {
            "random" => Ok(Strategy::Random),
            "filtered" => Ok(Strategy::Filtered),
            _ => Err(format!("unknown strategy {s:?} (expected random or filtered)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiningConfig {
    pub strategy: Strategy,
    pub min_gap: u8,
    pub drop_fraction: f64,
    pub keep_fraction: f64,
    /// Apply the similarity cut within each (hard level, easy level) group
    /// of a piece instead of across the whole piece.
    pub per_level_pair: bool,
    /// Keep variations with at least this confidence instead of dropping
    /// the `drop_fraction` least confident.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_confidence: Option<f64>,
}

impl MiningConfig {
    pub fn new(strategy: Strategy, min_gap: u8) -> MiningConfig {
        MiningConfig { strategy, min_gap, drop_fraction: 0.25, keep_fraction: 0.5, per_level_pair: false, min_confidence: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiningReport {
    pub config: MiningConfig,
    pub pieces: usize,
    pub variations: usize,
    pub variations_after_confidence: usize,
    /// Pairs over all variations.
    pub raw_pairs: usize,
    /// Pairs over variations that survived the confidence filter.
    pub pairs_after_confidence: usize,
    pub pairs_after_similarity: usize,
    /// Mean `1 − cosine` over all raw pairs.
    pub raw_mean_distance: Option<f64>,
    /// Mean `1 − cosine` over the emitted pairs.
    pub mean_distance: Option<f64>,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let mut v: Vec<f64> = xs.collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    Some(v.iter().sum::<f64>() / v.len() as f64)
}

/// Keeps the `ceil(keep · n)` most similar pairs; equal similarities keep
/// their enumeration order.
fn most_similar(mut pairs: Vec<VariationPair>, keep: f64) -> Vec<VariationPair> {
    let n = ((keep * pairs.len() as f64) - 1e-9).ceil().max(0.0) as usize;
    pairs.sort_by(|a, b| b.similarity.total_cmp(&a.similarity));
    pairs.truncate(n);
    pairs
}

fn piece_pairs(variations: &[Variation], members: &[usize], min_gap: u8) -> Result<Vec<VariationPair>, MiningError> {
    let levels: Vec<Level> = members.iter().map(|&i| variations[i].level()).collect::<Result<_, _>>()?;
    enumerate_pairs(&levels, min_gap)
        .into_iter()
        .map(|(a, b)| {
            let (h, e) = (&variations[members[a]], &variations[members[b]]);
            Ok(VariationPair {
                piece: h.piece.clone(),
                hard: members[a],
                easy: members[b],
                hard_level: levels[a],
                easy_level: levels[b],
                gap: levels[a].get() - levels[b].get(),
                similarity: cosine_similarity(h.embedding()?, e.embedding()?)?,
            })
        })
        .collect()
}

/// Mines pairs from variations of any number of pieces. Output is sorted
/// by (piece, hard id, easy id) and does not depend on thread count.
pub fn mine(variations: &[Variation], config: &MiningConfig) -> Result<(Vec<VariationPair>, MiningReport), MiningError> {
    if !(config.keep_fraction > 0.0 && config.keep_fraction <= 1.0) {
        return Err(MiningError::InvalidKeepFraction(config.keep_fraction));
    }
    for v in variations {
        v.level()?;
        v.embedding()?;
    }

    let mut pieces: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, v) in variations.iter().enumerate() {
        pieces.entry(v.piece.as_str()).or_default().push(i);
    }
    let groups: Vec<Vec<usize>> = pieces.into_values().collect();
    let raw: Vec<Vec<VariationPair>> =
        groups.par_iter().map(|m| piece_pairs(variations, m, config.min_gap)).collect::<Result<_, _>>()?;
    let raw_pairs = raw.iter().map(Vec::len).sum();
    let raw_mean_distance = mean(raw.iter().flatten().map(|p| 1.0 - p.similarity));

    let (kept_variations, per_piece) = match config.strategy {
        Strategy::Random => (variations.len(), raw),
        Strategy::Filtered => {
            let conf: Vec<f64> = variations.iter().map(|v| v.posterior.as_ref().map_or(0.0, |p| p.confidence)).collect();
            let mut keep = vec![false; variations.len()];
            let kept = match config.min_confidence {
                Some(t) => threshold_filter(&conf, t),
                None => confidence_filter(&conf, config.drop_fraction)?,
            };
            for &i in &kept {
                keep[i] = true;
            }
            let filtered: Vec<Vec<usize>> =
                groups.iter().map(|m| m.iter().copied().filter(|&i| keep[i]).collect()).collect();
            let pairs = filtered.par_iter().map(|m| piece_pairs(variations, m, config.min_gap)).collect::<Result<_, _>>()?;
            (kept.len(), pairs)
        }
    };
    let pairs_after_confidence = per_piece.iter().map(Vec::len).sum();

    let mut out: Vec<VariationPair> = match config.strategy {
        Strategy::Random => per_piece.into_iter().flatten().collect(),
        Strategy::Filtered => per_piece
            .into_par_iter()
            .map(|pairs| {
                if config.per_level_pair {
                    let mut by_levels: BTreeMap<(Level, Level), Vec<VariationPair>> = BTreeMap::new();
                    for p in pairs {
                        by_levels.entry((p.hard_level, p.easy_level)).or_default().push(p);
                    }
                    by_levels.into_values().flat_map(|g| most_similar(g, config.keep_fraction)).collect()
                } else {
                    most_similar(pairs, config.keep_fraction)
                }
            })
            .flatten()
            .collect(),
    };
    out.sort_by(|a, b| {
        (&a.piece, &variations[a.hard].id, &variations[a.easy].id).cmp(&(&b.piece, &variations[b.hard].id, &variations[b.easy].id))
    });

    let report = MiningReport {
        config: config.clone(),
        pieces: groups.len(),
        variations: variations.len(),
        variations_after_confidence: kept_variations,
        raw_pairs,
        pairs_after_confidence,
        pairs_after_similarity: out.len(),
        raw_mean_distance,
        mean_distance: mean(out.iter().map(|p| 1.0 - p.similarity)),
    };
    Ok((out, report))
}

/// One line of the exported pair dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub piece: String,
    pub hard_var: String,
    pub easy_var: String,
    pub hard: Vec<u32>,
    pub easy: Vec<u32>,
    pub hard_level: Level,
    pub easy_level: Level,
    pub gap: u8,
    pub sim: f64,
}

pub fn pair_records(
    pairs: &[VariationPair],
    variations: &[Variation],
    vocab: &Vocabulary,
) -> Result<Vec<PairRecord>, MiningError> {
    let mut out: Vec<PairRecord> = pairs
        .iter()
        .map(|p| {
            let (h, e) = (&variations[p.hard], &variations[p.easy]);
            Ok(PairRecord {
                piece: p.piece.clone(),
                hard_var: h.id.clone(),
                easy_var: e.id.clone(),
                hard: vocab.encode(&h.tokens)?,
                easy: vocab.encode(&e.tokens)?,
                hard_level: p.hard_level,
                easy_level: p.easy_level,
                gap: p.gap,
                sim: p.similarity,
            })
        })
        .collect::<Result<_, MiningError>>()?;
    out.sort_by(|a, b| (&a.piece, &a.hard_var, &a.easy_var).cmp(&(&b.piece, &b.hard_var, &b.easy_var)));
    Ok(out)
}

pub fn export_pairs(records: &[PairRecord]) -> String {
    jsonl::to_string(records)
}

pub fn import_pairs(text: &str) -> Result<Vec<PairRecord>, MiningError> {
    Ok(jsonl::parse(text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn levels(v: &[u8]) -> Vec<Level> {
        v.iter().map(|&x| Level::new(x).unwrap()).collect()
    }

    #[test]
    fn worked_examples() {
        let l = levels(&[1, 2, 2, 3]);
        assert_eq!(enumerate_pairs(&l, 1), vec![(1, 0), (2, 0), (3, 0), (3, 1), (3, 2)]);
        assert_eq!(enumerate_pairs(&l, 2), vec![(3, 0)]);
        assert!(enumerate_pairs(&levels(&[4, 4, 4]), 1).is_empty());
        assert_eq!(enumerate_pairs(&l, 0), enumerate_pairs(&l, 1));
    }

    #[test]
    fn ceil_keeps_a_single_pair() {
        let p = VariationPair {
            piece: "p".into(),
            hard: 1,
            easy: 0,
            hard_level: Level::new(2).unwrap(),
            easy_level: Level::new(1).unwrap(),
            gap: 1,
            similarity: 0.3,
        };
        assert_eq!(most_similar(vec![p.clone()], 0.5).len(), 1);
        assert_eq!(most_similar(vec![p.clone(), p.clone(), p.clone()], 0.5).len(), 2);
        assert_eq!(most_similar(vec![p.clone(), p], 0.5).len(), 1);
        assert!(most_similar(vec![], 0.5).is_empty());
    }

    #[test]
    fn empty_export_is_empty() {
        assert_eq!(export_pairs(&[]), "");
        assert!(import_pairs("").unwrap().is_empty());
    }
}
