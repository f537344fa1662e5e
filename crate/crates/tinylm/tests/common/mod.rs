#![allow(dead_code)]

use lmxpairs_core::sequences::{HarmonySlot, Sample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use tinylm::{Model, ModelConfig};

pub fn tiny(vocab: usize, width: usize, heads: usize, layers: usize) -> ModelConfig {
    ModelConfig { layers, width, heads, vocab, max_context: 64, dropout: 0.0, seed: 3 }
}

pub fn random_sample(rng: &mut ChaCha8Rng, vocab: usize, len: usize) -> Sample {
    let ids: Vec<u32> = (0..len).map(|_| rng.random_range(0..vocab as u32)).collect();
    let ctx = rng.random_range(1..len - 1);
    let mask = (0..len).map(|i| u8::from(i < ctx)).collect();
    let mut profile = [0.0; 12];
    profile.iter_mut().for_each(|p| *p = rng.random::<f64>());
    let harmony = Some(HarmonySlot { position: rng.random_range(0..ctx), profile });
    Sample { id: "s".into(), ids, mask, harmony }
}

pub fn scrambled(cfg: ModelConfig, seed: u64, std: f64) -> Model {
    let mut m = Model::new(cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = Normal::new(0.0, std).unwrap();
    m.params.iter_mut().for_each(|p| *p = n.sample(&mut rng));
    m
}

pub struct GradientCheck {
    /// Worst relative error over gradients of magnitude at least 1e-6.
    pub worst: f64,
    /// Worst absolute error over the smaller ones.
    pub tiny_worst: f64,
    pub checked: usize,
}

/// Central differences with h = 1e-5 on a 1-layer width-8 model until
/// `count` measurable parameters have been compared. Central differences
/// resolve about eps·|L|/h ≈ 1e-11 absolute, so relative agreement is
/// judged on gradients of at least 1e-6 only.
pub fn gradient_check(model_seed: u64, draw_seed: u64, count: usize) -> GradientCheck {
    let mut model = scrambled(tiny(12, 8, 2, 1), model_seed, 0.3);
    let mut rng = ChaCha8Rng::seed_from_u64(draw_seed);
    let sample = random_sample(&mut rng, 12, 10);
    let (_, grad) = model.loss_and_gradient(&sample).unwrap();
    assert!(model.num_params() >= count);
    let h = 1e-5;
    let mut out = GradientCheck { worst: 0.0, tiny_worst: 0.0, checked: 0 };
    while out.checked < count {
        let i = rng.random_range(0..model.num_params());
        let orig = model.params[i];
        model.params[i] = orig + h;
        let up = model.loss_and_gradient(&sample).unwrap().0;
        model.params[i] = orig - h;
        let down = model.loss_and_gradient(&sample).unwrap().0;
        model.params[i] = orig;
        let num = (up - down) / (2.0 * h);
        let scale = grad[i].abs().max(num.abs());
        if scale >= 1e-6 {
            out.worst = out.worst.max((grad[i] - num).abs() / scale);
            out.checked += 1;
        } else {
            out.tiny_worst = out.tiny_worst.max((grad[i] - num).abs());
        }
    }
    out
}
