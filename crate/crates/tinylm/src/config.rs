use serde::{Deserialize, Serialize};

use crate::ModelError;

/// Pitch-class profile length fed through the harmony projection.
pub const HARMONY_DIM: usize = 12;
/// Hidden width of each MLP, as a multiple of the model width.
pub const MLP_RATIO: usize = 4;
pub const ROPE_BASE: f64 = 10_000.0;
pub const LN_EPS: f64 = 1e-5;
pub const MAX_VOCAB: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub layers: usize,
    pub width: usize,
    pub heads: usize,
    pub vocab: usize,
    pub max_context: usize,
    pub dropout: f64,
    pub seed: u64,
}

impl ModelConfig {
    /// Two layers of width 64 with four heads.
    pub fn new(vocab: usize, max_context: usize) -> ModelConfig {
        ModelConfig { layers: 2, width: 64, heads: 4, vocab, max_context, dropout: 0.0, seed: 42 }
    }

    pub fn head_dim(&self) -> usize {
        self.width / self.heads
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |m: String| Err(ModelError::InvalidConfig(m));
        if self.layers == 0 || self.width == 0 || self.heads == 0 {
            return fail("layers, width and heads must be positive".into());
        }
        if !self.width.is_multiple_of(self.heads) {
            return fail(format!("width {} is not divisible by {} heads", self.width, self.heads));
        }
        if !self.head_dim().is_multiple_of(2) {
            return fail(format!("head dimension {} must be even for rotary encoding", self.head_dim()));
        }
        if self.vocab == 0 || self.vocab > MAX_VOCAB {
            return fail(format!("vocabulary size {} outside 1..={MAX_VOCAB}", self.vocab));
        }
        if self.max_context < 2 {
            return fail("max context must be at least 2".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }
}
