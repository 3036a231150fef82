//! Model configuration, the named-weight container, and deterministic
//! seeded initialization.
//!
//! Every tensor in the model has a canonical dotted name (see [`manifest`]);
//! the manifest fixes both the full tensor set for a configuration and the
//! canonical ordering used by on-disk checkpoints. File IO itself lives in
//! the companion CLI crate; this module stays allocation-only.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{conv_out_len, Matrix};

/// Reserved vocabulary ids. `EOS` doubles as the end-of-translation signal
/// that terminates a simultaneous run.
pub const PAD_ID: usize = 0;
pub const BOS_ID: usize = 1;
pub const EOS_ID: usize = 2;
/// Number of reserved ids at the bottom of every vocabulary.
pub const RESERVED_TOKENS: usize = 3;

/// Segment geometry at the encoder-state rate (after 4x subsampling):
/// `left` trailing rows of already-seen context, `center` new rows, `right`
/// rows of lookahead.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentSpec {
    pub left: usize,
    pub center: usize,
    pub right: usize,
}

impl SegmentSpec {
    pub fn new(left: usize, center: usize, right: usize) -> Self {
        Self { left, center, right }
    }
}

/// Complete model + streaming configuration.
///
/// `max_memory` of `usize::MAX` means an unbounded memory bank; the CLI
/// spells that "inf". `predecision_chunk` and `waitk_k` are defaults for the
/// simultaneous policy and may be overridden per run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_enc_layers: usize,
    pub n_dec_layers: usize,
    pub d_ffn: usize,
    pub d_feat: usize,
    pub vocab_size: usize,
    pub frame_shift_ms: f64,
    /// Frame-to-state ratio of the convolutional front end. Fixed at 4 (two
    /// stride-2 layers); kept as a field so serialized configs are explicit.
    pub subsample_ratio: usize,
    pub segment: SegmentSpec,
    pub max_memory: usize,
    pub predecision_chunk: usize,
    pub waitk_k: usize,
}

impl Default for ModelConfig {
    /// Full-scale configuration: 256-dim model, 4 heads, 12+6 layers,
    /// 80-dim features at a 10 ms shift, segments of 8/16/8 encoder states
    /// (320/640/320 ms of audio).
    fn default() -> Self {
        Self {
            d_model: 256,
            n_heads: 4,
            n_enc_layers: 12,
            n_dec_layers: 6,
            d_ffn: 1024,
            d_feat: 80,
            vocab_size: 10_000,
            frame_shift_ms: 10.0,
            subsample_ratio: crate::numerics::SUBSAMPLE_RATIO,
            segment: SegmentSpec::new(8, 16, 8),
            max_memory: usize::MAX,
            predecision_chunk: 8,
            waitk_k: 3,
        }
    }
}

impl ModelConfig {
    /// Small configuration sized for fast deterministic tests: every code
    /// path of the full model at a fraction of the arithmetic.
    pub fn desk_scale() -> Self {
        Self {
            d_model: 32,
            n_heads: 2,
            n_enc_layers: 2,
            n_dec_layers: 2,
            d_ffn: 128,
            d_feat: 16,
            vocab_size: 64,
            frame_shift_ms: 10.0,
            subsample_ratio: crate::numerics::SUBSAMPLE_RATIO,
            segment: SegmentSpec::new(4, 8, 0),
            max_memory: 3,
            predecision_chunk: 8,
            waitk_k: 3,
        }
    }

    pub fn d_head(&self) -> usize {
        self.d_model / self.n_heads
    }

    /// Feature-axis width after the two stride-2 convolution layers.
    pub fn conv_out_feat(&self) -> usize {
        conv_out_len(self.d_feat)
    }

    /// Duration of one encoder state in milliseconds.
    pub fn state_ms(&self) -> f64 {
        self.frame_shift_ms * self.subsample_ratio as f64
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.d_model == 0 || self.n_heads == 0 {
            return fail(format!(
                "d_model={} and n_heads={} must both be >= 1",
                self.d_model, self.n_heads
            ));
        }
        if self.d_model % self.n_heads != 0 {
            return fail(format!(
                "d_model={} not divisible by n_heads={}",
                self.d_model, self.n_heads
            ));
        }
        if self.n_enc_layers == 0 || self.n_dec_layers == 0 {
            return fail("layer counts must be >= 1".to_string());
        }
        if self.d_ffn == 0 || self.d_feat == 0 {
            return fail("d_ffn and d_feat must be >= 1".to_string());
        }
        if self.vocab_size < RESERVED_TOKENS {
            return fail(format!(
                "vocab_size={} too small: ids 0..{} are reserved (pad/bos/eos)",
                self.vocab_size,
                RESERVED_TOKENS - 1
            ));
        }
        if !(self.frame_shift_ms > 0.0) {
            return fail(format!("frame_shift_ms={} must be > 0", self.frame_shift_ms));
        }
        if self.subsample_ratio != crate::numerics::SUBSAMPLE_RATIO {
            return fail(format!(
                "subsample_ratio={} unsupported: the front end is fixed at {}",
                self.subsample_ratio,
                crate::numerics::SUBSAMPLE_RATIO
            ));
        }
        if self.segment.center == 0 {
            return fail("segment center size must be >= 1".to_string());
        }
        // max_memory 0 is legal: it disables the memory bank entirely, which
        // is both a meaningful ablation and the oracle-equivalence setting.
        if self.predecision_chunk == 0 {
            return fail("predecision_chunk must be >= 1".to_string());
        }
        if self.waitk_k == 0 {
            return fail("waitk_k must be >= 1 (use usize::MAX for offline)".to_string());
        }
        Ok(())
    }
}

/// Shape and canonical name of one tensor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

impl TensorSpec {
    fn new(name: String, rows: usize, cols: usize) -> Self {
        Self { name, rows, cols }
    }
}

fn push_linear(out: &mut Vec<TensorSpec>, prefix: &str, rows: usize, cols: usize) {
    out.push(TensorSpec::new(format!("{prefix}.weight"), rows, cols));
    out.push(TensorSpec::new(format!("{prefix}.bias"), 1, cols));
}

fn push_norm(out: &mut Vec<TensorSpec>, prefix: &str, d: usize) {
    out.push(TensorSpec::new(format!("{prefix}.gain"), 1, d));
    out.push(TensorSpec::new(format!("{prefix}.bias"), 1, d));
}

fn push_attention(out: &mut Vec<TensorSpec>, prefix: &str, d: usize) {
    for proj in ["wq", "wk", "wv", "wo"] {
        push_linear(out, &format!("{prefix}.{proj}"), d, d);
    }
}

fn push_ffn(out: &mut Vec<TensorSpec>, prefix: &str, d: usize, d_ffn: usize) {
    push_linear(out, &format!("{prefix}.w1"), d, d_ffn);
    push_linear(out, &format!("{prefix}.w2"), d_ffn, d);
}

/// Enumerates every tensor of the architecture in canonical (checkpoint)
/// order. Linear weights are `[in, out]` (applied as `x * W`); convolution
/// kernels are `[out_ch, in_ch*9]`; norm gains/biases are `1 x d` rows.
pub fn manifest(config: &ModelConfig) -> Vec<TensorSpec> {
    let d = config.d_model;
    let mut out = Vec::new();
    // Convolutional front end: 1 -> d channels, then d -> d channels, then a
    // linear map from the channel-major flattening onto d_model.
    push_linear(&mut out, "conv.l1", d, 9);
    push_linear(&mut out, "conv.l2", d, d * 9);
    // push_linear writes [rows, cols] = [in, out] for the projection, but the
    // conv kernels above are [out_ch, in_ch*9]; fix the bias widths up front.
    out[1] = TensorSpec::new("conv.l1.bias".to_string(), 1, d);
    out[3] = TensorSpec::new("conv.l2.bias".to_string(), 1, d);
    push_linear(&mut out, "conv.proj", d * config.conv_out_feat(), d);

    for l in 0..config.n_enc_layers {
        push_attention(&mut out, &format!("enc.{l}.attn"), d);
        push_norm(&mut out, &format!("enc.{l}.norm1"), d);
        push_ffn(&mut out, &format!("enc.{l}.ffn"), d, config.d_ffn);
        push_norm(&mut out, &format!("enc.{l}.norm2"), d);
    }

    out.push(TensorSpec::new("dec.embed.weight".to_string(), config.vocab_size, d));
    for l in 0..config.n_dec_layers {
        push_attention(&mut out, &format!("dec.{l}.self_attn"), d);
        push_norm(&mut out, &format!("dec.{l}.norm1"), d);
        push_attention(&mut out, &format!("dec.{l}.cross_attn"), d);
        push_norm(&mut out, &format!("dec.{l}.norm2"), d);
        push_ffn(&mut out, &format!("dec.{l}.ffn"), d, config.d_ffn);
        push_norm(&mut out, &format!("dec.{l}.norm3"), d);
    }
    push_linear(&mut out, "dec.out", d, config.vocab_size);
    out
}

/// Immutable map from canonical tensor name to matrix. Built once by
/// [`init_weights`] or a checkpoint loader, then shared read-only.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSet {
    tensors: BTreeMap<String, Matrix>,
}

impl WeightSet {
    pub fn new() -> Self {
        Self { tensors: BTreeMap::new() }
    }

    pub fn insert(&mut self, name: String, tensor: Matrix) {
        self.tensors.insert(name, tensor);
    }

    pub fn get(&self, name: &str) -> Result<&Matrix> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::MissingTensor(name.to_string()))
    }

    /// Convenience accessor for `1 x d` tensors (biases, norm gains).
    pub fn vec(&self, name: &str) -> Result<&[f32]> {
        let m = self.get(name)?;
        if m.rows() != 1 {
            return Err(Error::Shape {
                op: "WeightSet::vec",
                lhs: m.shape(),
                rhs: (1, m.cols()),
            });
        }
        Ok(m.row(0))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(|s| s.as_str())
    }

    /// Checks completeness and shapes against the generated manifest:
    /// no missing tensors, no extras, no shape drift, and all entries finite.
    pub fn validate(&self, config: &ModelConfig) -> Result<()> {
        config.validate()?;
        let specs = manifest(config);
        for spec in &specs {
            let t = self.get(&spec.name)?;
            if t.shape() != (spec.rows, spec.cols) {
                return Err(Error::Config(format!(
                    "tensor {} has shape {:?}, expected ({}, {})",
                    spec.name,
                    t.shape(),
                    spec.rows,
                    spec.cols
                )));
            }
            if !t.is_finite() {
                return Err(Error::NonFinite("WeightSet::validate"));
            }
        }
        if self.tensors.len() != specs.len() {
            let expected: alloc::collections::BTreeSet<&str> =
                specs.iter().map(|s| s.name.as_str()).collect();
            let extra = self
                .tensors
                .keys()
                .find(|k| !expected.contains(k.as_str()))
                .map(|k| k.as_str())
                .unwrap_or("?");
            return Err(Error::Config(format!("unexpected tensor {extra}")));
        }
        Ok(())
    }
}

impl Default for WeightSet {
    fn default() -> Self {
        Self::new()
    }
}

/// Deterministic random initialization: weights uniform in `[-s, s]` with
/// `s = sqrt(6 / (fan_in + fan_out))`, biases zero, norm gains one. A pure
/// function of `(config, seed)`.
pub fn init_weights(config: &ModelConfig, seed: u64) -> Result<WeightSet> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = WeightSet::new();
    for spec in manifest(config) {
        let n = spec.rows * spec.cols;
        let data: Vec<f32> = if spec.name.ends_with(".weight") {
            let s = libm::sqrtf(6.0 / (spec.rows + spec.cols) as f32);
            (0..n).map(|_| rng.gen_range(-s..s)).collect()
        } else if spec.name.ends_with(".gain") {
            // Unit gains: random gains centered on zero would collapse every
            // normalized activation toward the bias.
            alloc::vec![1.0; n]
        } else {
            alloc::vec![0.0; n]
        };
        out.insert(spec.name, Matrix::new(spec.rows, spec.cols, data)?);
    }
    Ok(out)
}
