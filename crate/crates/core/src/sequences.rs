//! Training sequence layouts and loss masks.
//!
//! A mask value of 1 marks context the model reads but is not trained to
//! produce; 0 marks loss-bearing positions.
//!
//! Conditioned: `<bos> skyline… <harmony> body… <eos>`, mask 1 on the prefix.
//! The `<harmony>` slot carries a 12-value pitch-class profile alongside.
//!
//! Adaptation: `<level:h> hard… [SEP] <level:e> easy… <eos>`, mask 1 up to and
//! including `<level:e>`.

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{PitchClassProfile, SkylineSequence};
use crate::classifier::Level;
use crate::lmx::{TokenSequence, VocabError, Vocabulary, BOS, EOS, HARMONY, MEASURE, SEP};

pub const DEFAULT_MAX_LEN: usize = 8000;

#[derive(Debug, Error, PartialEq)]
pub enum SequenceError {
    #[error("empty body")]
    EmptyBody,
    #[error("target level {easy} is not below input level {hard}")]
    NoDifficultyGap { hard: Level, easy: Level },
    #[error("sequence needs {needed} positions but max_len is {max_len}")]
    Oversized { needed: usize, max_len: usize },
    #[error("{what}: lengths {a} and {b} differ")]
    LengthMismatch { what: &'static str, a: usize, b: usize },
    #[error("every position is masked")]
    AllMasked,
    #[error("target id {id} at position {position} is outside a vocabulary of {vocab}")]
    TargetOutOfRange { position: usize, id: u32, vocab: usize },
    #[error(transparent)]
    Vocab(#[from] VocabError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonySlot {
    /// Index of the `<harmony>` token in `ids`.
    pub position: usize,
    pub profile: [f64; 12],
}

/// Trainer-facing form shared by both layouts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub ids: Vec<u32>,
    pub mask: Vec<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub harmony: Option<HarmonySlot>,
}

impl Sample {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Positions that carry loss.
    pub fn loss_positions(&self) -> usize {
        self.mask.iter().filter(|&&m| m == 0).count()
    }

    /// Next-token view: inputs `ids[..L-1]`, targets `ids[1..]`, loss mask
    /// `mask[1..]`.
    pub fn shifted(&self) -> (&[u32], &[u32], &[u8]) {
        let n = self.ids.len();
        (&self.ids[..n.saturating_sub(1)], &self.ids[1.min(n)..], &self.mask[1.min(n)..])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionedSample {
    pub id: String,
    pub ids: Vec<u32>,
    pub mask: Vec<u8>,
    pub prefix_len: usize,
    pub harmony: HarmonySlot,
}

impl From<ConditionedSample> for Sample {
    fn from(c: ConditionedSample) -> Sample {
        Sample { id: c.id, ids: c.ids, mask: c.mask, harmony: Some(c.harmony) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptationSample {
    pub id: String,
    pub ids: Vec<u32>,
    pub mask: Vec<u8>,
    pub hard_level: Level,
    pub easy_level: Level,
    /// Trailing hard-segment measures dropped to fit `max_len`.
    pub dropped_measures: usize,
}

impl From<AdaptationSample> for Sample {
    fn from(a: AdaptationSample) -> Sample {
        Sample { id: a.id, ids: a.ids, mask: a.mask, harmony: None }
    }
}

/// Cuts an LMX id sequence before whole trailing measures until it has at
/// most `budget` ids. Returns the kept prefix and the number of measures
/// dropped, or `None` if not even the first measure fits.
fn truncate_measures(ids: &[u32], measure: Option<u32>, budget: usize) -> Option<(&[u32], usize)> {
    if ids.len() <= budget {
        return Some((ids, 0));
    }
    let starts: Vec<usize> = ids.iter().enumerate().filter(|(_, &t)| Some(t) == measure).map(|(i, _)| i).collect();
    let cut = starts.iter().rev().copied().find(|&s| s > 0 && s <= budget)?;
    let dropped = starts.iter().filter(|&&s| s >= cut).count();
    Some((&ids[..cut], dropped))
}

/// Keeps whole skyline entries (a pitch or rest plus its duration tokens)
/// while the token count stays within `budget`.
fn truncate_skyline(tokens: &TokenSequence, budget: usize) -> &[String] {
    if tokens.len() <= budget {
        return &tokens.tokens;
    }
    let is_head = |t: &String| t == "rest" || t.parse::<crate::score::Pitch>().is_ok();
    let cut = (1..=budget).rev().find(|&i| i == tokens.len() || is_head(&tokens.tokens[i])).unwrap_or(0);
    &tokens.tokens[..cut]
}

/// `<bos> skyline… <harmony> body… <eos>`. A skyline longer than half of
/// `max_len` is cut to whole entries; a body that still does not fit loses
/// trailing measures.
pub fn build_conditioned(
    id: &str,
    skyline: &SkylineSequence,
    profile: &PitchClassProfile,
    body: &TokenSequence,
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<ConditionedSample, SequenceError> {
    if body.is_empty() {
        return Err(SequenceError::EmptyBody);
    }
    let sky_tokens = skyline.tokens();
    let sky = truncate_skyline(&sky_tokens, max_len / 2);
    if sky.len() < sky_tokens.len() {
        warn!("{id}: skyline cut from {} to {} tokens", sky_tokens.len(), sky.len());
    }
    let mut ids = vec![BOS];
    ids.extend(vocab.encode(&TokenSequence::new(sky.to_vec()))?);
    let position = ids.len();
    ids.push(HARMONY);
    let prefix_len = ids.len();

    let body_ids = vocab.encode(body)?;
    let budget = max_len.saturating_sub(prefix_len + 1);
    let (kept, dropped) = truncate_measures(&body_ids, vocab.id(MEASURE), budget)
        .ok_or(SequenceError::Oversized { needed: prefix_len + body_ids.len() + 1, max_len })?;
    if dropped > 0 {
        warn!("{id}: body cut by {dropped} trailing measure(s)");
    }
    ids.extend_from_slice(kept);
    ids.push(EOS);
    let mut mask = vec![0u8; ids.len()];
    mask[..prefix_len].fill(1);
    Ok(ConditionedSample {
        id: id.to_string(),
        ids,
        mask,
        prefix_len,
        harmony: HarmonySlot { position, profile: profile.weights },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdaptationLayout {
    pub max_len: usize,
    /// Include `<level:h>` and `<level:e>` around `[SEP]`.
    pub level_tokens: bool,
}

impl Default for AdaptationLayout {
    fn default() -> AdaptationLayout {
        AdaptationLayout { max_len: DEFAULT_MAX_LEN, level_tokens: true }
    }
}

/// Pair layout with or without the two level tokens. Trailing measures of
/// the hard segment are dropped to fit; the easy segment is never cut.
pub fn build_adaptation(
    id: &str,
    (hard, hard_level): (&[u32], Level),
    (easy, easy_level): (&[u32], Level),
    vocab: &Vocabulary,
    layout: AdaptationLayout,
) -> Result<AdaptationSample, SequenceError> {
    let AdaptationLayout { max_len, level_tokens } = layout;
    if easy_level >= hard_level {
        return Err(SequenceError::NoDifficultyGap { hard: hard_level, easy: easy_level });
    }
    if easy.is_empty() || hard.is_empty() {
        return Err(SequenceError::EmptyBody);
    }
    let specials = if level_tokens { 4 } else { 2 };
    let budget = max_len.saturating_sub(easy.len() + specials);
    let needed = hard.len() + easy.len() + specials;
    let (hard, dropped) =
        truncate_measures(hard, vocab.id(MEASURE), budget).ok_or(SequenceError::Oversized { needed, max_len })?;

    let mut ids = Vec::with_capacity(hard.len() + easy.len() + specials);
    if level_tokens {
        ids.push(Vocabulary::level_id(hard_level.get()));
    }
    ids.extend_from_slice(hard);
    ids.push(SEP);
    if level_tokens {
        ids.push(Vocabulary::level_id(easy_level.get()));
    }
    let context = ids.len();
    ids.extend_from_slice(easy);
    ids.push(EOS);
    let mut mask = vec![0u8; ids.len()];
    mask[..context].fill(1);
    Ok(AdaptationSample { id: id.to_string(), ids, mask, hard_level, easy_level, dropped_measures: dropped })
}

/// Mean of `−log softmax(logits_t)[target_t]` over positions with mask 0.
/// `logits` is row-major `targets.len() × vocab`.
pub fn masked_cross_entropy(logits: &[f64], vocab: usize, targets: &[u32], mask: &[u8]) -> Result<f64, SequenceError> {
    if targets.len() != mask.len() {
        return Err(SequenceError::LengthMismatch { what: "targets and mask", a: targets.len(), b: mask.len() });
    }
    if logits.len() != targets.len() * vocab {
        return Err(SequenceError::LengthMismatch { what: "logits and targets × vocab", a: logits.len(), b: targets.len() * vocab });
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (t, (&target, &m)) in targets.iter().zip(mask).enumerate() {
        if m != 0 {
            continue;
        }
        if target as usize >= vocab {
            return Err(SequenceError::TargetOutOfRange { position: t, id: target, vocab });
        }
        let row = &logits[t * vocab..(t + 1) * vocab];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        total += lse - row[target as usize];
        count += 1;
    }
    if count == 0 {
        return Err(SequenceError::AllMasked);
    }
    Ok(total / count as f64)
}
