//! Incremental transformer decoder with per-layer key/value caches.
//!
//! Each step embeds the previously emitted token (BOS at step one), runs the
//! decoder stack with cached self-attention keys/values, cross-attends over
//! every encoder state available at call time, and greedily picks the next
//! token (ties broken toward the lowest id). Cross-attention keys/values are
//! a pure function of encoder rows, so they are cached incrementally as the
//! encoder output grows — per-step work does not depend on how many tokens
//! came before beyond the self-attention length.
//!
//! Emitting EOS ends a sentence: [`reset_on_eos`] clears the token history
//! and self-attention caches while keeping the encoder-side caches.

use alloc::format;
use alloc::vec::Vec;

use crate::encoder::{attention_weights, AttentionWeights, EncoderOutput};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, WeightSet, BOS_ID, EOS_ID};
use crate::numerics::{layer_norm, linear, Matrix};

use crate::encoder::LN_EPS;

/// Sinusoidal positional encoding for one position: even dims sine, odd dims
/// cosine, wavelengths geometric from 2π to 10000·2π.
pub fn sinusoidal_pe(pos: usize, d: usize) -> Vec<f32> {
    let mut pe = Vec::with_capacity(d);
    for j in 0..d {
        let i = (j / 2) as f32;
        let denom = libm::powf(10_000.0, 2.0 * i / d as f32);
        let angle = pos as f32 / denom;
        pe.push(if j % 2 == 0 {
            libm::sinf(angle)
        } else {
            libm::cosf(angle)
        });
    }
    pe
}

/// Per-sentence decoding state plus encoder-side caches.
#[derive(Debug, Clone)]
pub struct DecoderState {
    tokens: Vec<usize>,
    /// Per-layer self-attention caches; row count == tokens emitted since
    /// the last reset (plus the in-flight row during a step).
    self_k: Vec<Matrix>,
    self_v: Vec<Matrix>,
    /// Per-layer cross-attention caches over encoder rows; survive resets.
    cross_k: Vec<Matrix>,
    cross_v: Vec<Matrix>,
    cross_rows_seen: usize,
}

impl DecoderState {
    pub fn new(config: &ModelConfig) -> Self {
        let d = config.d_model;
        let n = config.n_dec_layers;
        Self {
            tokens: Vec::new(),
            self_k: alloc::vec![Matrix::empty(d); n],
            self_v: alloc::vec![Matrix::empty(d); n],
            cross_k: alloc::vec![Matrix::empty(d); n],
            cross_v: alloc::vec![Matrix::empty(d); n],
            cross_rows_seen: 0,
        }
    }

    /// Tokens emitted since the last reset.
    pub fn tokens(&self) -> &[usize] {
        &self.tokens
    }

    pub fn cache_len(&self) -> usize {
        self.self_k.first().map(Matrix::rows).unwrap_or(0)
    }

    /// Appends a token without running the model. Used by the session to
    /// force EOS at the length cap; the state must be reset immediately
    /// after, since no cache row is written for the forced token.
    pub(crate) fn force_token(&mut self, token: usize) {
        self.tokens.push(token);
    }
}

struct DecoderLayer<'a> {
    self_attn: AttentionWeights<'a>,
    self_wo: &'a Matrix,
    self_bo: &'a [f32],
    norm1_g: &'a [f32],
    norm1_b: &'a [f32],
    cross_attn: AttentionWeights<'a>,
    cross_wo: &'a Matrix,
    cross_bo: &'a [f32],
    norm2_g: &'a [f32],
    norm2_b: &'a [f32],
    ffn_w1: &'a Matrix,
    ffn_b1: &'a [f32],
    ffn_w2: &'a Matrix,
    ffn_b2: &'a [f32],
    norm3_g: &'a [f32],
    norm3_b: &'a [f32],
}

fn decoder_layer<'a>(weights: &'a WeightSet, l: usize) -> Result<DecoderLayer<'a>> {
    let p = format!("dec.{l}");
    Ok(DecoderLayer {
        self_attn: attention_weights(weights, &format!("{p}.self_attn"))?,
        self_wo: weights.get(&format!("{p}.self_attn.wo.weight"))?,
        self_bo: weights.vec(&format!("{p}.self_attn.wo.bias"))?,
        norm1_g: weights.vec(&format!("{p}.norm1.gain"))?,
        norm1_b: weights.vec(&format!("{p}.norm1.bias"))?,
        cross_attn: attention_weights(weights, &format!("{p}.cross_attn"))?,
        cross_wo: weights.get(&format!("{p}.cross_attn.wo.weight"))?,
        cross_bo: weights.vec(&format!("{p}.cross_attn.wo.bias"))?,
        norm2_g: weights.vec(&format!("{p}.norm2.gain"))?,
        norm2_b: weights.vec(&format!("{p}.norm2.bias"))?,
        ffn_w1: weights.get(&format!("{p}.ffn.w1.weight"))?,
        ffn_b1: weights.vec(&format!("{p}.ffn.w1.bias"))?,
        ffn_w2: weights.get(&format!("{p}.ffn.w2.weight"))?,
        ffn_b2: weights.vec(&format!("{p}.ffn.w2.bias"))?,
        norm3_g: weights.vec(&format!("{p}.norm3.gain"))?,
        norm3_b: weights.vec(&format!("{p}.norm3.bias"))?,
    })
}

/// Attention of one projected query row over cached projected keys/values.
fn attend_cached(q: &[f32], keys: &Matrix, values: &Matrix, n_heads: usize) -> Result<Vec<f32>> {
    if keys.rows() == 0 {
        return Err(Error::EmptyInput("attend_cached: no key rows"));
    }
    let d = q.len();
    let dh = d / n_heads;
    let beta = 1.0 / libm::sqrtf(dh as f32);
    let mut out = alloc::vec![0.0f32; d];
    let mut logits: Vec<f32> = Vec::with_capacity(keys.rows());
    for h in 0..n_heads {
        let c0 = h * dh;
        logits.clear();
        for j in 0..keys.rows() {
            let krow = &keys.row(j)[c0..c0 + dh];
            let mut dot = 0.0f32;
            for (&a, &b) in q[c0..c0 + dh].iter().zip(krow.iter()) {
                dot += a * b;
            }
            logits.push(beta * dot);
        }
        let attn = crate::numerics::softmax_row(&logits)?;
        for (j, &aj) in attn.iter().enumerate() {
            let vrow = &values.row(j)[c0..c0 + dh];
            for (t, &vv) in vrow.iter().enumerate() {
                out[c0 + t] += aj * vv;
            }
        }
    }
    Ok(out)
}

fn add(a: &[f32], b: &[f32]) -> Vec<f32> {
    a.iter().zip(b.iter()).map(|(&x, &y)| x + y).collect()
}

/// One greedy decode step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub token_id: usize,
    pub logits: Vec<f32>,
}

/// Runs one decoder step over the encoder states available now, appends the
/// argmax token to the state, and returns it with the full logit row.
pub fn decode_step(
    state: &mut DecoderState,
    enc: &EncoderOutput,
    weights: &WeightSet,
    config: &ModelConfig,
) -> Result<StepOutput> {
    if enc.states.rows() == 0 {
        return Err(Error::EmptyInput("decode_step: encoder states"));
    }
    let n_heads = config.n_heads;
    // Input token: the previous output, BOS at the start of a sentence. Its
    // position equals the number of tokens emitted since the reset.
    let prev = state.tokens.last().copied().unwrap_or(BOS_ID);
    let pos = state.tokens.len();
    let embed = weights.get("dec.embed.weight")?;
    if prev >= embed.rows() {
        return Err(Error::Contract("decode_step: token id outside vocabulary"));
    }
    let mut x = add(embed.row(prev), &sinusoidal_pe(pos, config.d_model));

    let new_cross = state.cross_rows_seen < enc.states.rows();
    for l in 0..config.n_dec_layers {
        let lw = decoder_layer(weights, l)?;

        // Self-attention over every cached target position plus this one.
        let q = linear(&x, lw.self_attn.wq, lw.self_attn.bq)?;
        let k = linear(&x, lw.self_attn.wk, lw.self_attn.bk)?;
        let v = linear(&x, lw.self_attn.wv, lw.self_attn.bv)?;
        state.self_k[l].push_row(&k)?;
        state.self_v[l].push_row(&v)?;
        let attn = attend_cached(&q, &state.self_k[l], &state.self_v[l], n_heads)?;
        let h = layer_norm(&add(&x, &linear(&attn, lw.self_wo, lw.self_bo)?), lw.norm1_g, lw.norm1_b, LN_EPS)?;

        // Cross-attention; extend this layer's encoder-side cache first.
        if new_cross {
            for r in state.cross_rows_seen..enc.states.rows() {
                let row = enc.states.row(r);
                let ck = linear(row, lw.cross_attn.wk, lw.cross_attn.bk)?;
                let cv = linear(row, lw.cross_attn.wv, lw.cross_attn.bv)?;
                state.cross_k[l].push_row(&ck)?;
                state.cross_v[l].push_row(&cv)?;
            }
        }
        let q2 = linear(&h, lw.cross_attn.wq, lw.cross_attn.bq)?;
        let attn2 = attend_cached(&q2, &state.cross_k[l], &state.cross_v[l], n_heads)?;
        let h2 = layer_norm(&add(&h, &linear(&attn2, lw.cross_wo, lw.cross_bo)?), lw.norm2_g, lw.norm2_b, LN_EPS)?;

        // Feed-forward.
        let mut mid = linear(&h2, lw.ffn_w1, lw.ffn_b1)?;
        for m in mid.iter_mut() {
            *m = m.max(0.0);
        }
        let ff = linear(&mid, lw.ffn_w2, lw.ffn_b2)?;
        x = layer_norm(&add(&h2, &ff), lw.norm3_g, lw.norm3_b, LN_EPS)?;
    }
    state.cross_rows_seen = enc.states.rows();

    let logits = linear(&x, weights.get("dec.out.weight")?, weights.vec("dec.out.bias")?)?;
    // Greedy argmax; strict comparison keeps the lowest id on ties.
    let mut token_id = 0;
    let mut best = f32::NEG_INFINITY;
    for (i, &v) in logits.iter().enumerate() {
        if v > best {
            best = v;
            token_id = i;
        }
    }
    state.tokens.push(token_id);
    Ok(StepOutput { token_id, logits })
}

/// Clears the sentence state after an EOS: token history and self-attention
/// caches go, encoder-side caches stay (they depend only on encoder rows).
pub fn reset_on_eos(state: &mut DecoderState) -> Result<()> {
    if state.tokens.last().copied() != Some(EOS_ID) {
        return Err(Error::Contract("reset_on_eos: last emitted token is not EOS"));
    }
    state.tokens.clear();
    let d = state.cross_k.first().map(Matrix::cols).unwrap_or(0);
    for m in state.self_k.iter_mut().chain(state.self_v.iter_mut()) {
        *m = Matrix::empty(d);
    }
    Ok(())
}
