//! JSON checkpoints of the full training state.

use serde::{Deserialize, Serialize};

use crate::train::{OptimConfig, TrainState};
use crate::{Model, ModelConfig, ModelError};

pub const FORMAT: &str = "lmxpairs-tinylm";
pub const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    config: ModelConfig,
    optim: OptimConfig,
    step: u64,
    params: Vec<f64>,
    m: Vec<f64>,
    v: Vec<f64>,
}

pub fn to_json(state: &TrainState) -> String {
    let c = Checkpoint {
        format: FORMAT.into(),
        version: VERSION,
        config: state.model.config.clone(),
        optim: state.optim.clone(),
        step: state.step,
        params: state.model.params.clone(),
        m: state.m.clone(),
        v: state.v.clone(),
    };
    serde_json::to_string(&c).expect("checkpoint serializes")
}

pub fn from_json(text: &str) -> Result<TrainState, ModelError> {
    let c: Checkpoint = serde_json::from_str(text).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    if c.format != FORMAT || c.version != VERSION {
        return Err(ModelError::Checkpoint(format!("unsupported format {} v{}", c.format, c.version)));
    }
    let n = c.params.len();
    if c.m.len() != n || c.v.len() != n {
        return Err(ModelError::Checkpoint("optimizer moments do not match the parameters".into()));
    }
    let model = Model::from_params(c.config, c.params)?;
    Ok(TrainState::restore(model, c.optim, c.m, c.v, c.step))
}
