use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::score::Score;
use crate::time::{to_f64, Time};

/// Duration-weighted pitch-class histogram, index 0 = C.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PitchClassProfile {
    pub weights: [f64; 12],
}

impl PitchClassProfile {
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for i in 1..12 {
            if self.weights[i] > self.weights[best] {
                best = i;
            }
        }
        best
    }
}

/// Sums written durations per pitch class over all non-grace notes.
pub fn pitch_class_profile(score: &Score) -> Result<PitchClassProfile, AnalysisError> {
    let zero = Time::from_integer(0);
    let mut totals = [zero; 12];
    for n in score.notes().filter(|n| !n.grace) {
        if let Some(p) = n.pitch {
            totals[p.pitch_class() as usize] += n.duration;
        }
    }
    let sum: Time = totals.iter().sum();
    if sum == zero {
        return Err(AnalysisError::DegenerateProfile);
    }
    Ok(PitchClassProfile { weights: totals.map(|t| to_f64(t / sum)) })
}

/// Adds uniform noise in `[-s·p_i, s·p_i]` to each weight and clips to
/// `[0, 1]`, without renormalizing. Always draws exactly 12 values from a
/// ChaCha8 stream seeded with `seed`.
pub fn perturb_unnormalized(p: &PitchClassProfile, noise_scale: f64, seed: u64) -> Result<[f64; 12], AnalysisError> {
    if !(0.0..1.0).contains(&noise_scale) {
        return Err(AnalysisError::InvalidNoiseScale(noise_scale));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = [0.0; 12];
    for (o, &w) in out.iter_mut().zip(&p.weights) {
        let u: f64 = rng.random();
        let eps = (2.0 * u - 1.0) * noise_scale * w;
        *o = (w + eps).clamp(0.0, 1.0);
    }
    Ok(out)
}

/// [`perturb_unnormalized`] followed by renormalization. A zero noise scale
/// returns the input unchanged.
pub fn perturb_profile(p: &PitchClassProfile, noise_scale: f64, seed: u64) -> Result<PitchClassProfile, AnalysisError> {
    let raw = perturb_unnormalized(p, noise_scale, seed)?;
    if noise_scale == 0.0 {
        return Ok(*p);
    }
    let sum: f64 = raw.iter().sum();
    if sum <= 0.0 {
        return Err(AnalysisError::DegenerateProfile);
    }
    Ok(PitchClassProfile { weights: raw.map(|w| w / sum) })
}
