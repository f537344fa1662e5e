//! A small decoder-only transformer: pre-norm blocks, rotary positions,
//! causal attention, GELU MLPs, and a linear harmony projection into one
//! reserved input slot. Gradients are computed by hand.

pub mod checkpoint;
pub mod config;
mod model;
pub mod params;
pub mod sample;
pub mod train;

use thiserror::Error;

use lmxpairs_core::sequences::Sample;

pub use config::ModelConfig;
pub use model::{HarmonyInput, KvCache};
pub use params::Layout;
pub use sample::{generate, Generation, SamplingConfig};
pub use train::{OptimConfig, TrainState};

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("input is empty")]
    EmptyInput,
    #[error("sequence of {len} tokens exceeds the context of {max}")]
    TooLong { len: usize, max: usize },
    #[error("{ids} tokens but {positions} positions")]
    PositionMismatch { ids: usize, positions: usize },
    #[error("token {index}: id {id} is outside the vocabulary")]
    TokenOutOfRange { index: usize, id: u32 },
    #[error("harmony slot at {0} is out of range or not finite")]
    BadHarmony(usize),
    #[error("expected {expected} parameters, found {found}")]
    ParamCount { expected: usize, found: usize },
    #[error("sample {0:?} has no loss-bearing positions")]
    NoTargets(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("non-finite loss at step {step}: {detail}")]
    NonFinite { step: u64, detail: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    layout: Layout,
    pub params: Vec<f64>,
}

/// Summed negative log-likelihood over loss-bearing positions, their
/// count, and the gradient of the sum.
pub(crate) struct SampleGrad {
    pub nll: f64,
    pub count: usize,
    pub grad: Vec<f64>,
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Model, ModelError> {
        config.validate()?;
        let layout = Layout::new(&config);
        let params = layout.init(config.seed);
        Ok(Model { config, layout, params })
    }

    pub fn from_params(config: ModelConfig, params: Vec<f64>) -> Result<Model, ModelError> {
        config.validate()?;
        let layout = Layout::new(&config);
        if params.len() != layout.total {
            return Err(ModelError::ParamCount { expected: layout.total, found: params.len() });
        }
        Ok(Model { config, layout, params })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn num_params(&self) -> usize {
        self.layout.total
    }

    /// `T × V` logits, row-major. Positions default to `0..T`.
    pub fn logits(&self, ids: &[u32], positions: Option<&[usize]>, harmony: HarmonyInput) -> Result<Vec<f64>, ModelError> {
        let default: Vec<usize>;
        let positions = match positions {
            Some(p) => p,
            None => {
                default = (0..ids.len()).collect();
                &default
            }
        };
        model::check_input(&self.config, ids, positions, harmony)?;
        Ok(model::forward(&self.params, &self.layout, &self.config, ids, positions, harmony, None).0)
    }

    /// Mean masked cross-entropy of a sample and its gradient, without dropout.
    pub fn loss_and_gradient(&self, sample: &Sample) -> Result<(f64, Vec<f64>), ModelError> {
        let mut g = self.sample_gradient(sample, None)?;
        let n = g.count as f64;
        g.grad.iter_mut().for_each(|x| *x /= n);
        Ok((g.nll / n, g.grad))
    }

    pub(crate) fn sample_gradient(&self, sample: &Sample, rng: Option<&mut rand_chacha::ChaCha8Rng>) -> Result<SampleGrad, ModelError> {
        let (inputs, targets, mask) = sample.shifted();
        let harmony = sample.harmony.as_ref().filter(|h| h.position < inputs.len()).map(|h| (h.position, &h.profile));
        let positions: Vec<usize> = (0..inputs.len()).collect();
        model::check_input(&self.config, inputs, &positions, harmony)?;
        if let Some(index) = targets.iter().position(|&t| t as usize >= self.config.vocab) {
            return Err(ModelError::TokenOutOfRange { index: index + 1, id: targets[index] });
        }
        let (logits, cache) = model::forward(&self.params, &self.layout, &self.config, inputs, &positions, harmony, rng);
        let v = self.config.vocab;
        let mut dlogits = vec![0.0; logits.len()];
        let mut nll = 0.0;
        let mut count = 0;
        for t in 0..targets.len() {
            if mask[t] != 0 {
                continue;
            }
            let row = &logits[t * v..(t + 1) * v];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = row.iter().map(|x| (x - max).exp()).sum();
            let lse = max + sum.ln();
            nll += lse - row[targets[t] as usize];
            count += 1;
            let d = &mut dlogits[t * v..(t + 1) * v];
            for (di, &x) in d.iter_mut().zip(row) {
                *di = (x - lse).exp();
            }
            d[targets[t] as usize] -= 1.0;
        }
        if count == 0 {
            return Err(ModelError::NoTargets(sample.id.clone()));
        }
        let mut grad = vec![0.0; self.layout.total];
        model::backward(&self.params, &self.layout, inputs, harmony, &positions, &cache, &dlogits, &mut grad);
        Ok(SampleGrad { nll, count, grad })
    }

    /// Appends `token` at `pos` to the cache and returns the next-token logits.
    pub fn decode_step(&self, cache: &mut KvCache, token: u32, pos: usize, harmony: Option<&[f64; config::HARMONY_DIM]>) -> Vec<f64> {
        model::decode_step(&self.params, &self.layout, cache, token, pos, harmony)
    }

    pub fn new_cache(&self) -> KvCache {
        KvCache::new(self.config.layers)
    }

    /// Scaled query-key score in one head for hidden vectors `xq`, `xk`
    /// placed at positions `qpos`, `kpos`.
    #[allow(clippy::too_many_arguments)]
    pub fn attention_score(&self, layer: usize, head: usize, xq: &[f64], qpos: usize, xk: &[f64], kpos: usize) -> f64 {
        model::attention_score(&self.params, &self.layout, layer, head, xq, qpos, xk, kpos)
    }
}
