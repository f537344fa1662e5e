//! Flat parameter layout.

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::{ModelConfig, HARMONY_DIM, MLP_RATIO};

#[derive(Debug, Clone, PartialEq)]
pub struct LayerOffsets {
    pub ln1_g: usize,
    pub ln1_b: usize,
    pub qkv: usize,
    pub o: usize,
    pub ln2_g: usize,
    pub ln2_b: usize,
    pub fc: usize,
    pub proj: usize,
}

/// Offsets of every tensor inside the flat parameter vector. Linear maps are
/// stored row-major as `[in × out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub d: usize,
    pub heads: usize,
    pub dh: usize,
    pub f: usize,
    pub v: usize,
    pub tok_emb: usize,
    pub harm_w: usize,
    pub harm_b: usize,
    pub layers: Vec<LayerOffsets>,
    pub lnf_g: usize,
    pub lnf_b: usize,
    pub out_w: usize,
    pub total: usize,
}

impl Layout {
    pub fn new(cfg: &ModelConfig) -> Layout {
        let (d, v, f) = (cfg.width, cfg.vocab, cfg.width * MLP_RATIO);
        let mut at = 0;
        let mut take = |n: usize| {
            let o = at;
            at += n;
            o
        };
        let tok_emb = take(v * d);
        let harm_w = take(HARMONY_DIM * d);
        let harm_b = take(d);
        let layers = (0..cfg.layers)
            .map(|_| LayerOffsets {
                ln1_g: take(d),
                ln1_b: take(d),
                qkv: take(d * 3 * d),
                o: take(d * d),
                ln2_g: take(d),
                ln2_b: take(d),
                fc: take(d * f),
                proj: take(f * d),
            })
            .collect();
        let lnf_g = take(d);
        let lnf_b = take(d);
        let out_w = take(d * v);
        Layout { d, heads: cfg.heads, dh: cfg.head_dim(), f, v, tok_emb, harm_w, harm_b, layers, lnf_g, lnf_b, out_w, total: at }
    }

    /// Ranges of the weight matrices, which receive weight decay.
    pub fn matrices(&self) -> Vec<Range<usize>> {
        let (d, f, v) = (self.d, self.f, self.v);
        let mut m = vec![self.tok_emb..self.tok_emb + v * d, self.harm_w..self.harm_w + HARMONY_DIM * d];
        for l in &self.layers {
            m.push(l.qkv..l.qkv + d * 3 * d);
            m.push(l.o..l.o + d * d);
            m.push(l.fc..l.fc + d * f);
            m.push(l.proj..l.proj + f * d);
        }
        m.push(self.out_w..self.out_w + d * v);
        m
    }

    /// Normal(0, 0.02) matrices, residual output projections scaled by
    /// 1/sqrt(2·layers); unit layer-norm gains; zero biases.
    pub fn init(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = vec![0.0; self.total];
        let base = Normal::new(0.0, 0.02).expect("valid std");
        let resid = Normal::new(0.0, 0.02 / (2.0 * self.layers.len() as f64).sqrt()).expect("valid std");
        let residual: Vec<usize> = self.layers.iter().flat_map(|l| [l.o, l.proj]).collect();
        for r in self.matrices() {
            let dist = if residual.contains(&r.start) { resid } else { base };
            for x in &mut p[r] {
                *x = dist.sample(&mut rng);
            }
        }
        let mut gains = vec![self.lnf_g];
        gains.extend(self.layers.iter().flat_map(|l| [l.ln1_g, l.ln2_g]));
        for g in gains {
            p[g..g + self.d].fill(1.0);
        }
        p
    }
}
