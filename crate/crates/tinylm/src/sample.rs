//! Autoregressive sampling with a key/value cache.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use lmxpairs_core::lmx::{delinearize, Vocabulary, EOS};
use lmxpairs_core::score::{validate_two_staff, ValidatedScore};
use lmxpairs_core::sequences::HarmonySlot;

use crate::{Model, ModelError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub n: usize,
    /// 0 selects greedy decoding.
    pub temperature: f64,
    /// 0 keeps the whole vocabulary.
    pub top_k: usize,
    pub seed: u64,
    /// Total length cap including the prefix; capped again by the context.
    pub max_len: usize,
}

impl SamplingConfig {
    pub fn new(n: usize, seed: u64, max_len: usize) -> SamplingConfig {
        SamplingConfig { n, temperature: 1.0, top_k: 32, seed, max_len }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    pub index: usize,
    /// Generated ids after the prefix, without the end token.
    pub ids: Vec<u32>,
    /// Whether the end token was produced before the length cap.
    pub ended: bool,
}

/// Picks the next id from logits. Candidates are ranked by logit, lower id
/// first on ties.
pub fn choose(logits: &[f64], temperature: f64, top_k: usize, rng: &mut ChaCha8Rng) -> u32 {
    let mut order: Vec<usize> = (0..logits.len()).collect();
    order.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
    if temperature <= 0.0 {
        return order[0] as u32;
    }
    if top_k > 0 {
        order.truncate(top_k);
    }
    let top = logits[order[0]];
    let weights: Vec<f64> = order.iter().map(|&i| ((logits[i] - top) / temperature).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (&i, w) in order.iter().zip(&weights) {
        if u < *w {
            return i as u32;
        }
        u -= w;
    }
    *order.last().expect("nonempty vocabulary") as u32
}

/// Draws `cfg.n` continuations of `prefix`. Sample `i` uses stream `i` of a
/// generator seeded with `cfg.seed`, so results do not depend on threading.
pub fn generate(model: &Model, prefix: &[u32], harmony: Option<&HarmonySlot>, cfg: &SamplingConfig) -> Result<Vec<Generation>, ModelError> {
    let positions: Vec<usize> = (0..prefix.len()).collect();
    let h = harmony.map(|s| (s.position, &s.profile));
    crate::model::check_input(&model.config, prefix, &positions, h)?;
    let max_len = cfg.max_len.min(model.config.max_context);
    let mut cache = model.new_cache();
    let mut logits = Vec::new();
    for (t, &tok) in prefix.iter().enumerate() {
        let slot = h.filter(|(p, _)| *p == t).map(|(_, v)| v);
        logits = model.decode_step(&mut cache, tok, t, slot);
    }
    let out = (0..cfg.n)
        .into_par_iter()
        .map(|index| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(index as u64);
            let mut cache = cache.clone();
            let mut logits = logits.clone();
            let mut ids = Vec::new();
            let mut ended = false;
            while prefix.len() + ids.len() < max_len {
                let next = choose(&logits, cfg.temperature, cfg.top_k, &mut rng);
                if next == EOS {
                    ended = true;
                    break;
                }
                ids.push(next);
                let pos = prefix.len() + ids.len() - 1;
                if pos + 1 >= max_len {
                    break;
                }
                logits = model.decode_step(&mut cache, next, pos, None);
            }
            Generation { index, ids, ended }
        })
        .collect();
    Ok(out)
}

/// Decodes a generation and checks it through strict delinearization and
/// the two-staff validator.
pub fn check_generation(g: &Generation, vocab: &Vocabulary) -> Result<ValidatedScore, String> {
    if !g.ended {
        return Err("no end token before the length cap".into());
    }
    if let Some(i) = g.ids.iter().position(|&t| Vocabulary::is_special(t)) {
        return Err(format!("special token at {i}"));
    }
    let tokens = vocab.decode(&g.ids).map_err(|e| e.to_string())?;
    let score = delinearize(&tokens).map_err(|e| e.to_string())?;
    validate_two_staff(score).map_err(|e| e.to_string())
}
