use std::collections::{BTreeSet, HashMap};

use thiserror::Error;

use super::TokenSequence;

pub const SPECIALS: [&str; 14] = [
    "<pad>",
    "<bos>",
    "<eos>",
    "[SEP]",
    "<harmony>",
    "<level:1>",
    "<level:2>",
    "<level:3>",
    "<level:4>",
    "<level:5>",
    "<level:6>",
    "<level:7>",
    "<level:8>",
    "<level:9>",
];

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const SEP: u32 = 3;
pub const HARMONY: u32 = 4;
pub const MAX_VOCAB: usize = 512;

#[derive(Debug, Error, PartialEq)]
pub enum VocabError {
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("vocabulary needs {needed} entries but the limit is {limit}; {} tokens over", excess.len())]
    Overflow { needed: usize, limit: usize, excess: Vec<String> },
    #[error("token {index}: {token:?} is not in the vocabulary")]
    UnknownToken { index: usize, token: String },
    #[error("position {index}: id {id} is out of range")]
    IllegalId { index: usize, id: u32 },
    #[error("malformed vocabulary file: {0}")]
    Format(String),
}

/// Bijection between token strings and ids. Ids 0..14 are the special tokens
/// in [`SPECIALS`] order; corpus tokens follow in lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    pub fn build<'a>(corpus: impl IntoIterator<Item = &'a TokenSequence>) -> Result<Vocabulary, VocabError> {
        Vocabulary::build_with_limit(corpus, MAX_VOCAB)
    }

    pub fn build_with_limit<'a>(
        corpus: impl IntoIterator<Item = &'a TokenSequence>,
        limit: usize,
    ) -> Result<Vocabulary, VocabError> {
        let mut distinct = BTreeSet::new();
        let mut any = false;
        for seq in corpus {
            any |= !seq.is_empty();
            for t in &seq.tokens {
                if !SPECIALS.contains(&t.as_str()) {
                    distinct.insert(t.clone());
                }
            }
        }
        if !any {
            return Err(VocabError::EmptyCorpus);
        }
        let needed = SPECIALS.len() + distinct.len();
        if needed > limit {
            let keep = limit.saturating_sub(SPECIALS.len());
            let excess = distinct.into_iter().skip(keep).collect();
            return Err(VocabError::Overflow { needed, limit, excess });
        }
        let tokens = SPECIALS.iter().map(|s| s.to_string()).chain(distinct).collect();
        Vocabulary::from_tokens(tokens)
    }

    /// Takes tokens in id order and checks the special prefix and uniqueness.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Vocabulary, VocabError> {
        if tokens.len() < SPECIALS.len() || tokens.iter().zip(SPECIALS).any(|(t, s)| t != s) {
            return Err(VocabError::Format("special tokens missing or out of place".into()));
        }
        if tokens.len() > MAX_VOCAB {
            return Err(VocabError::Format(format!("{} entries exceed the limit of {MAX_VOCAB}", tokens.len())));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(VocabError::Format(format!("line {}: invalid token {t:?}", i + 1)));
            }
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(VocabError::Format(format!("duplicate token {t:?}")));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    /// Reads one token per line; the line number (from 0) is the id.
    pub fn from_text(text: &str) -> Result<Vocabulary, VocabError> {
        Vocabulary::from_tokens(text.lines().map(str::to_string).collect())
    }

    pub fn to_text(&self) -> String {
        let mut out = self.tokens.join("\n");
        out.push('\n');
        out
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn level_id(level: u8) -> u32 {
        assert!((1..=9).contains(&level), "difficulty level {level} outside 1..=9");
        HARMONY + level as u32
    }

    pub fn is_special(id: u32) -> bool {
        (id as usize) < SPECIALS.len()
    }

    pub fn encode(&self, seq: &TokenSequence) -> Result<Vec<u32>, VocabError> {
        seq.tokens
            .iter()
            .enumerate()
            .map(|(index, t)| self.id(t).ok_or_else(|| VocabError::UnknownToken { index, token: t.clone() }))
            .collect()
    }

    pub fn decode(&self, ids: &[u32]) -> Result<TokenSequence, VocabError> {
        let tokens = ids
            .iter()
            .enumerate()
            .map(|(index, &id)| self.token(id).map(str::to_string).ok_or(VocabError::IllegalId { index, id }))
            .collect::<Result<_, _>>()?;
        Ok(TokenSequence::new(tokens))
    }
}
