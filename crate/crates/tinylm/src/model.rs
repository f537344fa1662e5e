//! Forward and backward passes. Every per-position computation goes through
//! the same kernels whether it runs over a whole sequence or one step at a
//! time against a key/value cache, so both paths agree bitwise.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::config::{ModelConfig, HARMONY_DIM, LN_EPS, ROPE_BASE};
use crate::params::Layout;
use crate::ModelError;

/// `out = x · w` for `w` stored `[x.len() × out.len()]`.
fn matvec(x: &[f64], w: &[f64], out: &mut [f64]) {
    let n = out.len();
    out.fill(0.0);
    for (i, &xi) in x.iter().enumerate() {
        let row = &w[i * n..(i + 1) * n];
        for (o, &wij) in out.iter_mut().zip(row) {
            *o += xi * wij;
        }
    }
}

/// `dx += w · dy`.
fn matvec_t_acc(dy: &[f64], w: &[f64], dx: &mut [f64]) {
    let n = dy.len();
    for (i, d) in dx.iter_mut().enumerate() {
        let row = &w[i * n..(i + 1) * n];
        let mut s = 0.0;
        for (&wij, &g) in row.iter().zip(dy) {
            s += wij * g;
        }
        *d += s;
    }
}

/// `dw += x ⊗ dy`.
fn outer_acc(x: &[f64], dy: &[f64], dw: &mut [f64]) {
    let n = dy.len();
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        for (w, &g) in dw[i * n..(i + 1) * n].iter_mut().zip(dy) {
            *w += xi * g;
        }
    }
}

/// Returns the reciprocal standard deviation.
fn layer_norm(x: &[f64], g: &[f64], b: &[f64], y: &mut [f64], xhat: &mut [f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let rstd = 1.0 / (var + LN_EPS).sqrt();
    for i in 0..x.len() {
        xhat[i] = (x[i] - mean) * rstd;
        y[i] = g[i] * xhat[i] + b[i];
    }
    rstd
}

fn layer_norm_backward(dy: &[f64], xhat: &[f64], rstd: f64, g: &[f64], dg: &mut [f64], db: &mut [f64], dx: &mut [f64]) {
    let n = dy.len() as f64;
    let mut mean_dxhat = 0.0;
    let mut mean_dxhat_xhat = 0.0;
    for i in 0..dy.len() {
        dg[i] += dy[i] * xhat[i];
        db[i] += dy[i];
        let dxh = dy[i] * g[i];
        mean_dxhat += dxh;
        mean_dxhat_xhat += dxh * xhat[i];
    }
    mean_dxhat /= n;
    mean_dxhat_xhat /= n;
    for i in 0..dy.len() {
        dx[i] += rstd * (dy[i] * g[i] - mean_dxhat - xhat[i] * mean_dxhat_xhat);
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

/// Rotates each `(2i, 2i+1)` pair of every head by `pos · base^(−2i/dh)`.
/// `sign = −1` applies the inverse rotation.
fn rope(v: &mut [f64], pos: usize, heads: usize, dh: usize, sign: f64) {
    for i in 0..dh / 2 {
        let theta = ROPE_BASE.powf(-2.0 * i as f64 / dh as f64);
        let (s, c) = (pos as f64 * theta).sin_cos();
        let s = sign * s;
        for h in 0..heads {
            let a = h * dh + 2 * i;
            let (x0, x1) = (v[a], v[a + 1]);
            v[a] = x0 * c - x1 * s;
            v[a + 1] = x0 * s + x1 * c;
        }
    }
}

/// Causal attention for one query against key/value rows `0..rows`.
/// Writes per-head probabilities into `probs[h * stride..][..rows]`.
#[allow(clippy::too_many_arguments)]
fn attend(q: &[f64], keys: &[f64], values: &[f64], rows: usize, heads: usize, dh: usize, probs: &mut [f64], stride: usize, out: &mut [f64]) {
    let d = heads * dh;
    let scale = 1.0 / (dh as f64).sqrt();
    out.fill(0.0);
    for h in 0..heads {
        let p = &mut probs[h * stride..h * stride + rows];
        let qh = &q[h * dh..(h + 1) * dh];
        let mut max = f64::NEG_INFINITY;
        for (j, pj) in p.iter_mut().enumerate() {
            let kh = &keys[j * d + h * dh..j * d + (h + 1) * dh];
            let mut s = 0.0;
            for c in 0..dh {
                s += qh[c] * kh[c];
            }
            *pj = s * scale;
            max = max.max(*pj);
        }
        let mut sum = 0.0;
        for pj in p.iter_mut() {
            *pj = (*pj - max).exp();
            sum += *pj;
        }
        for pj in p.iter_mut() {
            *pj /= sum;
        }
        let oh = &mut out[h * dh..(h + 1) * dh];
        for (j, &pj) in p.iter().enumerate() {
            let vh = &values[j * d + h * dh..j * d + (h + 1) * dh];
            for c in 0..dh {
                oh[c] += pj * vh[c];
            }
        }
    }
}

fn embed(p: &[f64], lay: &Layout, token: u32, harmony: Option<&[f64; HARMONY_DIM]>, x: &mut [f64]) {
    let d = lay.d;
    let t = token as usize;
    x.copy_from_slice(&p[lay.tok_emb + t * d..lay.tok_emb + (t + 1) * d]);
    if let Some(h) = harmony {
        let mut proj = vec![0.0; d];
        matvec(h, &p[lay.harm_w..lay.harm_w + HARMONY_DIM * d], &mut proj);
        for i in 0..d {
            x[i] += proj[i] + p[lay.harm_b + i];
        }
    }
}

/// Harmony vector for a sequence position, if the slot sits there.
pub type HarmonyInput<'a> = Option<(usize, &'a [f64; HARMONY_DIM])>;

fn harmony_at<'a>(harmony: HarmonyInput<'a>, t: usize) -> Option<&'a [f64; HARMONY_DIM]> {
    harmony.filter(|(pos, _)| *pos == t).map(|(_, h)| h)
}

fn dropout_mask(rng: &mut ChaCha8Rng, n: usize, rate: f64) -> Vec<f64> {
    let keep = 1.0 / (1.0 - rate);
    (0..n).map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep }).collect()
}

struct LayerCache {
    ln1_xhat: Vec<f64>,
    ln1_rstd: Vec<f64>,
    a: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    probs: Vec<f64>,
    o: Vec<f64>,
    att_mask: Option<Vec<f64>>,
    ln2_xhat: Vec<f64>,
    ln2_rstd: Vec<f64>,
    b: Vec<f64>,
    h1: Vec<f64>,
    g: Vec<f64>,
    mlp_mask: Option<Vec<f64>>,
}

pub(crate) struct Cache {
    t: usize,
    emb_mask: Option<Vec<f64>>,
    layers: Vec<LayerCache>,
    lnf_xhat: Vec<f64>,
    lnf_rstd: Vec<f64>,
    f: Vec<f64>,
}

pub(crate) fn check_input(cfg: &ModelConfig, ids: &[u32], positions: &[usize], harmony: HarmonyInput) -> Result<(), ModelError> {
    if ids.is_empty() {
        return Err(ModelError::EmptyInput);
    }
    if ids.len() > cfg.max_context {
        return Err(ModelError::TooLong { len: ids.len(), max: cfg.max_context });
    }
    if positions.len() != ids.len() {
        return Err(ModelError::PositionMismatch { ids: ids.len(), positions: positions.len() });
    }
    if let Some(index) = ids.iter().position(|&t| t as usize >= cfg.vocab) {
        return Err(ModelError::TokenOutOfRange { index, id: ids[index] });
    }
    if let Some((pos, h)) = harmony {
        if pos >= ids.len() || h.iter().any(|x| !x.is_finite()) {
            return Err(ModelError::BadHarmony(pos));
        }
    }
    Ok(())
}

/// Full-sequence forward pass; returns `T × V` logits and the activations
/// needed by [`backward`]. Dropout is active only when `rng` is given.
pub(crate) fn forward(
    p: &[f64],
    lay: &Layout,
    cfg: &ModelConfig,
    ids: &[u32],
    positions: &[usize],
    harmony: HarmonyInput,
    mut rng: Option<&mut ChaCha8Rng>,
) -> (Vec<f64>, Cache) {
    let (d, f, v, heads, dh) = (lay.d, lay.f, lay.v, lay.heads, lay.dh);
    let t_len = ids.len();
    let rate = cfg.dropout;
    let mut mask = |n: usize| match rng.as_deref_mut() {
        Some(r) if rate > 0.0 => Some(dropout_mask(r, n, rate)),
        _ => None,
    };

    let mut x = vec![0.0; t_len * d];
    for t in 0..t_len {
        embed(p, lay, ids[t], harmony_at(harmony, t), &mut x[t * d..(t + 1) * d]);
    }
    let emb_mask = mask(t_len * d);
    if let Some(m) = &emb_mask {
        x.iter_mut().zip(m).for_each(|(a, b)| *a *= b);
    }

    let mut layers = Vec::with_capacity(lay.layers.len());
    for lo in &lay.layers {
        let mut c = LayerCache {
            ln1_xhat: vec![0.0; t_len * d],
            ln1_rstd: vec![0.0; t_len],
            a: vec![0.0; t_len * d],
            q: vec![0.0; t_len * d],
            k: vec![0.0; t_len * d],
            v: vec![0.0; t_len * d],
            probs: vec![0.0; heads * t_len * t_len],
            o: vec![0.0; t_len * d],
            att_mask: None,
            ln2_xhat: vec![0.0; t_len * d],
            ln2_rstd: vec![0.0; t_len],
            b: vec![0.0; t_len * d],
            h1: vec![0.0; t_len * f],
            g: vec![0.0; t_len * f],
            mlp_mask: None,
        };
        let mut qkv = vec![0.0; 3 * d];
        for t in 0..t_len {
            let r = t * d..(t + 1) * d;
            c.ln1_rstd[t] = layer_norm(&x[r.clone()], &p[lo.ln1_g..lo.ln1_g + d], &p[lo.ln1_b..lo.ln1_b + d], &mut c.a[r.clone()], &mut c.ln1_xhat[r.clone()]);
            qkv_step(p, lay, lo.qkv, &c.a[r.clone()], positions[t], &mut qkv);
            c.q[r.clone()].copy_from_slice(&qkv[..d]);
            c.k[r.clone()].copy_from_slice(&qkv[d..2 * d]);
            c.v[r].copy_from_slice(&qkv[2 * d..]);
        }
        let mut att = vec![0.0; t_len * d];
        for t in 0..t_len {
            let r = t * d..(t + 1) * d;
            attend(&c.q[r.clone()], &c.k, &c.v, t + 1, heads, dh, &mut c.probs[t * t_len * heads..], t_len, &mut c.o[r.clone()]);
            matvec(&c.o[r.clone()], &p[lo.o..lo.o + d * d], &mut att[r]);
        }
        c.att_mask = mask(t_len * d);
        residual_add(&mut x, &att, c.att_mask.as_deref());

        let mut m = vec![0.0; t_len * d];
        for t in 0..t_len {
            let r = t * d..(t + 1) * d;
            let rf = t * f..(t + 1) * f;
            c.ln2_rstd[t] = layer_norm(&x[r.clone()], &p[lo.ln2_g..lo.ln2_g + d], &p[lo.ln2_b..lo.ln2_b + d], &mut c.b[r.clone()], &mut c.ln2_xhat[r.clone()]);
            mlp_step(p, lay, lo.fc, lo.proj, &c.b[r.clone()], &mut c.h1[rf.clone()], &mut c.g[rf], &mut m[r]);
        }
        c.mlp_mask = mask(t_len * d);
        residual_add(&mut x, &m, c.mlp_mask.as_deref());
        layers.push(c);
    }

    let mut lnf_xhat = vec![0.0; t_len * d];
    let mut lnf_rstd = vec![0.0; t_len];
    let mut fo = vec![0.0; t_len * d];
    let mut logits = vec![0.0; t_len * v];
    for t in 0..t_len {
        let r = t * d..(t + 1) * d;
        lnf_rstd[t] = layer_norm(&x[r.clone()], &p[lay.lnf_g..lay.lnf_g + d], &p[lay.lnf_b..lay.lnf_b + d], &mut fo[r.clone()], &mut lnf_xhat[r.clone()]);
        matvec(&fo[r], &p[lay.out_w..lay.out_w + d * v], &mut logits[t * v..(t + 1) * v]);
    }
    (logits, Cache { t: t_len, emb_mask, layers, lnf_xhat, lnf_rstd, f: fo })
}

fn qkv_step(p: &[f64], lay: &Layout, w: usize, a: &[f64], pos: usize, qkv: &mut [f64]) {
    let d = lay.d;
    matvec(a, &p[w..w + d * 3 * d], qkv);
    rope(&mut qkv[..d], pos, lay.heads, lay.dh, 1.0);
    rope(&mut qkv[d..2 * d], pos, lay.heads, lay.dh, 1.0);
}

#[allow(clippy::too_many_arguments)]
fn mlp_step(p: &[f64], lay: &Layout, fc: usize, proj: usize, b: &[f64], h1: &mut [f64], g: &mut [f64], out: &mut [f64]) {
    let (d, f) = (lay.d, lay.f);
    matvec(b, &p[fc..fc + d * f], h1);
    for (gi, &hi) in g.iter_mut().zip(h1.iter()) {
        *gi = gelu(hi);
    }
    matvec(g, &p[proj..proj + f * d], out);
}

fn residual_add(x: &mut [f64], branch: &[f64], mask: Option<&[f64]>) {
    match mask {
        Some(m) => x.iter_mut().zip(branch).zip(m).for_each(|((a, b), k)| *a += b * k),
        None => x.iter_mut().zip(branch).for_each(|(a, b)| *a += b),
    }
}

/// Accumulates into `grad` the gradient of `Σ_t dlogits[t] · logits[t]`.
pub(crate) fn backward(p: &[f64], lay: &Layout, ids: &[u32], harmony: HarmonyInput, positions: &[usize], cache: &Cache, dlogits: &[f64], grad: &mut [f64]) {
    let (d, f, v, heads, dh) = (lay.d, lay.f, lay.v, lay.heads, lay.dh);
    let t_len = cache.t;
    let mut dx = vec![0.0; t_len * d];

    {
        let (dg, db) = ln_grads(grad, lay.lnf_g, lay.lnf_b, d);
        for t in 0..t_len {
            let r = t * d..(t + 1) * d;
            let dl = &dlogits[t * v..(t + 1) * v];
            if dl.iter().all(|&g| g == 0.0) {
                continue;
            }
            let mut dfo = vec![0.0; d];
            matvec_t_acc(dl, &p[lay.out_w..lay.out_w + d * v], &mut dfo);
            layer_norm_backward(&dfo, &cache.lnf_xhat[r.clone()], cache.lnf_rstd[t], &p[lay.lnf_g..lay.lnf_g + d], dg, db, &mut dx[r]);
        }
    }
    for t in 0..t_len {
        let dl = &dlogits[t * v..(t + 1) * v];
        outer_acc(&cache.f[t * d..(t + 1) * d], dl, &mut grad[lay.out_w..lay.out_w + d * v]);
    }

    for (lo, c) in lay.layers.iter().zip(&cache.layers).rev() {
        // MLP branch.
        let dm = masked(&dx, c.mlp_mask.as_deref());
        let mut db_ln = vec![0.0; t_len * d];
        for t in 0..t_len {
            let r = t * d..(t + 1) * d;
            let rf = t * f..(t + 1) * f;
            outer_acc(&c.g[rf.clone()], &dm[r.clone()], &mut grad[lo.proj..lo.proj + f * d]);
            let mut dg = vec![0.0; f];
            matvec_t_acc(&dm[r.clone()], &p[lo.proj..lo.proj + f * d], &mut dg);
            for (g, &h) in dg.iter_mut().zip(&c.h1[rf]) {
                *g *= gelu_grad(h);
            }
            outer_acc(&c.b[r.clone()], &dg, &mut grad[lo.fc..lo.fc + d * f]);
            matvec_t_acc(&dg, &p[lo.fc..lo.fc + d * f], &mut db_ln[r]);
        }
        for t in 0..t_len {
            let r = t * d..(t + 1) * d;
            let (g, b) = ln_grads(grad, lo.ln2_g, lo.ln2_b, d);
            layer_norm_backward(&db_ln[r.clone()], &c.ln2_xhat[r.clone()], c.ln2_rstd[t], &p[lo.ln2_g..lo.ln2_g + d], g, b, &mut dx[r]);
        }

        // Attention branch.
        let datt = masked(&dx, c.att_mask.as_deref());
        let mut do_ = vec![0.0; t_len * d];
        for t in 0..t_len {
            let r = t * d..(t + 1) * d;
            outer_acc(&c.o[r.clone()], &datt[r.clone()], &mut grad[lo.o..lo.o + d * d]);
            matvec_t_acc(&datt[r.clone()], &p[lo.o..lo.o + d * d], &mut do_[r]);
        }
        let mut dq = vec![0.0; t_len * d];
        let mut dk = vec![0.0; t_len * d];
        let mut dv = vec![0.0; t_len * d];
        let scale = 1.0 / (dh as f64).sqrt();
        let mut dp = vec![0.0; t_len];
        for t in 0..t_len {
            for h in 0..heads {
                let probs = &c.probs[t * t_len * heads + h * t_len..][..t + 1];
                let doh = &do_[t * d + h * dh..t * d + (h + 1) * dh];
                let mut dot = 0.0;
                for j in 0..=t {
                    let vh = &c.v[j * d + h * dh..j * d + (h + 1) * dh];
                    let mut s = 0.0;
                    for cc in 0..dh {
                        s += doh[cc] * vh[cc];
                        dv[j * d + h * dh + cc] += probs[j] * doh[cc];
                    }
                    dp[j] = s;
                    dot += probs[j] * s;
                }
                let qh = &c.q[t * d + h * dh..t * d + (h + 1) * dh];
                for j in 0..=t {
                    let ds = probs[j] * (dp[j] - dot) * scale;
                    if ds == 0.0 {
                        continue;
                    }
                    for cc in 0..dh {
                        dq[t * d + h * dh + cc] += ds * c.k[j * d + h * dh + cc];
                        dk[j * d + h * dh + cc] += ds * qh[cc];
                    }
                }
            }
        }
        let mut da = vec![0.0; t_len * d];
        let mut dqkv = vec![0.0; 3 * d];
        for t in 0..t_len {
            let r = t * d..(t + 1) * d;
            dqkv[..d].copy_from_slice(&dq[r.clone()]);
            dqkv[d..2 * d].copy_from_slice(&dk[r.clone()]);
            dqkv[2 * d..].copy_from_slice(&dv[r.clone()]);
            rope(&mut dqkv[..d], positions[t], heads, dh, -1.0);
            rope(&mut dqkv[d..2 * d], positions[t], heads, dh, -1.0);
            outer_acc(&c.a[r.clone()], &dqkv, &mut grad[lo.qkv..lo.qkv + d * 3 * d]);
            matvec_t_acc(&dqkv, &p[lo.qkv..lo.qkv + d * 3 * d], &mut da[r]);
        }
        for t in 0..t_len {
            let r = t * d..(t + 1) * d;
            let (g, b) = ln_grads(grad, lo.ln1_g, lo.ln1_b, d);
            layer_norm_backward(&da[r.clone()], &c.ln1_xhat[r.clone()], c.ln1_rstd[t], &p[lo.ln1_g..lo.ln1_g + d], g, b, &mut dx[r]);
        }
    }

    let dx = masked(&dx, cache.emb_mask.as_deref());
    for t in 0..t_len {
        let r = t * d..(t + 1) * d;
        let tok = ids[t] as usize;
        for (g, &dd) in grad[lay.tok_emb + tok * d..lay.tok_emb + (tok + 1) * d].iter_mut().zip(&dx[r.clone()]) {
            *g += dd;
        }
        if let Some(h) = harmony_at(harmony, t) {
            outer_acc(h, &dx[r.clone()], &mut grad[lay.harm_w..lay.harm_w + HARMONY_DIM * d]);
            for (g, &dd) in grad[lay.harm_b..lay.harm_b + d].iter_mut().zip(&dx[r]) {
                *g += dd;
            }
        }
    }
}

/// Gain and bias gradient slices of a layer norm; the bias follows the gain.
fn ln_grads(grad: &mut [f64], g: usize, b: usize, d: usize) -> (&mut [f64], &mut [f64]) {
    debug_assert_eq!(b, g + d);
    grad[g..g + 2 * d].split_at_mut(d)
}

fn masked(x: &[f64], mask: Option<&[f64]>) -> Vec<f64> {
    match mask {
        Some(m) => x.iter().zip(m).map(|(a, b)| a * b).collect(),
        None => x.to_vec(),
    }
}

/// Key/value cache for incremental decoding.
#[derive(Debug, Clone)]
pub struct KvCache {
    keys: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
    len: usize,
}

impl KvCache {
    pub fn new(layers: usize) -> KvCache {
        KvCache { keys: vec![Vec::new(); layers], values: vec![Vec::new(); layers], len: 0 }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// Appends one token at `pos` and returns its logits.
pub(crate) fn decode_step(p: &[f64], lay: &Layout, cache: &mut KvCache, token: u32, pos: usize, harmony: Option<&[f64; HARMONY_DIM]>) -> Vec<f64> {
    let (d, f, v) = (lay.d, lay.f, lay.v);
    let mut x = vec![0.0; d];
    embed(p, lay, token, harmony, &mut x);
    let rows = cache.len + 1;
    let mut a = vec![0.0; d];
    let mut xhat = vec![0.0; d];
    let mut qkv = vec![0.0; 3 * d];
    let mut probs = vec![0.0; lay.heads * rows];
    let mut o = vec![0.0; d];
    let mut att = vec![0.0; d];
    let mut h1 = vec![0.0; f];
    let mut g = vec![0.0; f];
    let mut m = vec![0.0; d];
    for (l, lo) in lay.layers.iter().enumerate() {
        layer_norm(&x, &p[lo.ln1_g..lo.ln1_g + d], &p[lo.ln1_b..lo.ln1_b + d], &mut a, &mut xhat);
        qkv_step(p, lay, lo.qkv, &a, pos, &mut qkv);
        cache.keys[l].extend_from_slice(&qkv[d..2 * d]);
        cache.values[l].extend_from_slice(&qkv[2 * d..]);
        attend(&qkv[..d], &cache.keys[l], &cache.values[l], rows, lay.heads, lay.dh, &mut probs, rows, &mut o);
        matvec(&o, &p[lo.o..lo.o + d * d], &mut att);
        residual_add(&mut x, &att, None);
        layer_norm(&x, &p[lo.ln2_g..lo.ln2_g + d], &p[lo.ln2_b..lo.ln2_b + d], &mut a, &mut xhat);
        mlp_step(p, lay, lo.fc, lo.proj, &a, &mut h1, &mut g, &mut m);
        residual_add(&mut x, &m, None);
    }
    cache.len = rows;
    layer_norm(&x.clone(), &p[lay.lnf_g..lay.lnf_g + d], &p[lay.lnf_b..lay.lnf_b + d], &mut a, &mut xhat);
    let mut logits = vec![0.0; v];
    matvec(&a, &p[lay.out_w..lay.out_w + d * v], &mut logits);
    logits
}

/// Pre-softmax attention scores of head `head` in layer `layer` between a
/// query and a key at the given positions, from fixed hidden vectors.
pub(crate) fn attention_score(p: &[f64], lay: &Layout, layer: usize, head: usize, xq: &[f64], qpos: usize, xk: &[f64], kpos: usize) -> f64 {
    let d = lay.d;
    let lo = &lay.layers[layer];
    let mut a = vec![0.0; d];
    let mut xhat = vec![0.0; d];
    let mut qkv_q = vec![0.0; 3 * d];
    let mut qkv_k = vec![0.0; 3 * d];
    layer_norm(xq, &p[lo.ln1_g..lo.ln1_g + d], &p[lo.ln1_b..lo.ln1_b + d], &mut a, &mut xhat);
    qkv_step(p, lay, lo.qkv, &a, qpos, &mut qkv_q);
    layer_norm(xk, &p[lo.ln1_g..lo.ln1_g + d], &p[lo.ln1_b..lo.ln1_b + d], &mut a, &mut xhat);
    qkv_step(p, lay, lo.qkv, &a, kpos, &mut qkv_k);
    let dh = lay.dh;
    let r = head * dh..(head + 1) * dh;
    let s: f64 = qkv_q[r.clone()].iter().zip(&qkv_k[d + r.start..d + r.end]).map(|(a, b)| a * b).sum();
    s / (dh as f64).sqrt()
}
