//! The end-to-end streaming loop.
//!
//! One iteration makes one policy decision. Before deciding, the loop feeds
//! just enough frames to make the pending pre-decision chunk of encoder
//! states visible (segments are encoded as their context completes). READ
//! advances the chunk cursor; WRITE decodes one token and records its
//! delays. EOS resets the decoder (encoder memory persists); the run ends at
//! the first EOS after the source is exhausted.
//!
//! Time is simulated: frame `j` (1-based) arrives at `j * frame_shift_ms`,
//! so reading ahead of real time blocks the clock to arrival, and every
//! encode/decode call adds its measured duration via the [`Clock`]. With
//! [`NullClock`](crate::clock::NullClock) compute is free and runs are
//! bit-reproducible; with a wall clock the emission times are
//! computation-aware.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::decoder::{decode_step, reset_on_eos, DecoderState};
use crate::encoder::{encode_full, AugmemEncoder, EncoderInstr, EncoderOutput, UnidirEncoder};
use crate::error::{Error, Result};
use crate::features::FeatureStream;
use crate::model::{ModelConfig, WeightSet, EOS_ID};
use crate::numerics::MIN_FRAMES;
use crate::policy::{Decision, Policy, PolicyContext};

/// Which encoder drives the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EncoderVariant {
    /// Streaming augmented-memory encoder (the default).
    Augmem,
    /// Causal-masked baseline, fully recomputed every `recompute_chunk`
    /// new encoder states.
    Unidirectional { recompute_chunk: usize },
    /// Offline bidirectional encoder. The whole source is read before the
    /// first token, whatever the policy wanted.
    Full,
}

/// Run-level options beyond the model config.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionOptions {
    pub variant: EncoderVariant,
    /// Hard per-sentence token cap; reaching it emits a forced, flagged EOS.
    pub max_target_len: usize,
}

impl Default for SessionOptions {
    fn default() -> Self {
        Self {
            variant: EncoderVariant::Augmem,
            max_target_len: 200,
        }
    }
}

/// Timing of one emitted token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayRecord {
    /// 1-based token index over the whole run.
    pub index: usize,
    /// 0-based sentence group (incremented at each EOS).
    pub sentence: usize,
    pub token_id: usize,
    /// Source audio read when this token was emitted (NCA delay).
    pub speech_read_ms: f64,
    /// Simulated wall clock at emission (CA delay); >= speech_read_ms.
    pub clock_ms: f64,
    /// Measured compute charged since the previous emission.
    pub compute_ms: f64,
    /// True when this EOS was forced by the length cap.
    pub capped: bool,
}

/// Counters describing one run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionInstr {
    pub frames_consumed: usize,
    pub states_encoded: usize,
    pub chunks_read: usize,
    pub sentences: usize,
    pub capped_sentences: usize,
    pub decode_steps: usize,
    pub encoder: EncoderInstr,
}

/// Everything a run produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionResult {
    pub tokens: Vec<usize>,
    pub records: Vec<DelayRecord>,
    pub instr: SessionInstr,
}

enum Enc<'a> {
    Augmem(AugmemEncoder<'a>),
    Unidir(UnidirEncoder<'a>),
    /// Fully pre-encoded output (offline variant).
    Pre(EncoderOutput),
}

impl<'a> Enc<'a> {
    fn n_states(&self) -> usize {
        match self {
            Enc::Augmem(e) => e.n_states(),
            Enc::Unidir(e) => e.n_states(),
            Enc::Pre(o) => o.n_states(),
        }
    }

    fn output(&self) -> &EncoderOutput {
        match self {
            Enc::Augmem(e) => e.output(),
            Enc::Unidir(e) => e.output(),
            Enc::Pre(o) => o,
        }
    }

    fn is_closed(&self) -> bool {
        match self {
            Enc::Augmem(e) => e.is_closed(),
            Enc::Unidir(e) => e.is_closed(),
            Enc::Pre(_) => true,
        }
    }

    fn push_frame(&mut self, frame: &[f32]) -> Result<()> {
        match self {
            Enc::Augmem(e) => e.push_frame(frame),
            Enc::Unidir(e) => e.push_frame(frame),
            Enc::Pre(_) => Err(Error::Contract("pre-encoded variant cannot stream")),
        }
    }

    fn close(&mut self) -> Result<()> {
        match self {
            Enc::Augmem(e) => e.close(),
            Enc::Unidir(e) => e.close(),
            Enc::Pre(_) => Ok(()),
        }
    }

    fn instrumentation(&self) -> EncoderInstr {
        match self {
            Enc::Augmem(e) => e.instrumentation().clone(),
            Enc::Unidir(e) => e.instrumentation().clone(),
            Enc::Pre(_) => EncoderInstr::default(),
        }
    }
}

/// Runs one stream to completion under the given policy and returns tokens,
/// per-token delays, and instrumentation.
pub fn run_streaming(
    features: &FeatureStream,
    weights: &WeightSet,
    config: &ModelConfig,
    policy: &dyn Policy,
    opts: &SessionOptions,
    clock: &mut dyn Clock,
) -> Result<SessionResult> {
    config.validate()?;
    weights.validate(config)?;
    if features.d_feat() != config.d_feat {
        return Err(Error::Config(alloc::format!(
            "stream has d_feat={} but the model expects {}",
            features.d_feat(),
            config.d_feat
        )));
    }
    if (features.frame_shift_ms - config.frame_shift_ms).abs() > 1e-9 {
        return Err(Error::Config(alloc::format!(
            "stream frame shift {} ms does not match config {} ms",
            features.frame_shift_ms, config.frame_shift_ms
        )));
    }
    let total_frames = features.n_frames();
    if total_frames < MIN_FRAMES {
        return Err(Error::InsufficientFrames {
            required: MIN_FRAMES,
            got: total_frames,
        });
    }
    if opts.max_target_len == 0 {
        return Err(Error::Config("max_target_len must be >= 1".into()));
    }

    let shift = config.frame_shift_ms;
    let w_chunk = config.predecision_chunk;
    let mut sim_ms = 0.0f64;
    let mut frames_fed = 0usize;

    // Offline variant: consume the whole source up front, then decode.
    let mut enc = match opts.variant {
        EncoderVariant::Augmem => Enc::Augmem(AugmemEncoder::new(config, weights)?),
        EncoderVariant::Unidirectional { recompute_chunk } => {
            Enc::Unidir(UnidirEncoder::new(config, weights, recompute_chunk)?)
        }
        EncoderVariant::Full => {
            frames_fed = total_frames;
            sim_ms = total_frames as f64 * shift;
            let t0 = clock.now_ms();
            let out = encode_full(&features.frames, weights, config)?;
            sim_ms += clock.now_ms() - t0;
            Enc::Pre(out)
        }
    };

    let mut dec = DecoderState::new(config);
    let mut tokens: Vec<usize> = Vec::new();
    let mut records: Vec<DelayRecord> = Vec::new();
    let mut compute_acc = 0.0f64; // compute since the previous emission
    if let Enc::Pre(_) = enc {
        compute_acc = sim_ms - total_frames as f64 * shift;
    }
    let mut pending_chunk = 1usize; // 1-based index of the chunk being read
    let mut sentence = 0usize;
    let mut sentence_tokens = 0usize;
    let mut capped_sentences = 0usize;
    let mut decode_steps = 0usize;
    let mut chunks_read;

    loop {
        // Make the pending chunk's states visible, feeding frames as needed.
        while enc.n_states() < pending_chunk * w_chunk && !enc.is_closed() {
            let t0 = clock.now_ms();
            if frames_fed < total_frames {
                frames_fed += 1;
                // The frame cannot be read before it arrives.
                sim_ms = sim_ms.max(frames_fed as f64 * shift);
                enc.push_frame(features.frames.row(frames_fed - 1))?;
            } else {
                enc.close()?;
            }
            let dt = clock.now_ms() - t0;
            sim_ms += dt;
            compute_acc += dt;
        }
        let states = enc.n_states();
        // The pending chunk counts as read once any of its states are
        // visible (all of them, unless the stream ended inside the chunk).
        chunks_read = if states > (pending_chunk - 1) * w_chunk {
            pending_chunk
        } else {
            pending_chunk - 1
        };
        let source_done = enc.is_closed() && chunks_read * w_chunk >= states;

        let ctx = PolicyContext {
            chunks_read,
            tokens_written: tokens.len(),
            source_done,
            chunk_summary: None,
        };
        match policy.decide(&ctx) {
            Decision::Read => {
                if source_done {
                    return Err(Error::Contract("policy chose READ after source was exhausted"));
                }
                pending_chunk += 1;
            }
            Decision::Write => {
                let capped = sentence_tokens + 1 >= opts.max_target_len;
                let token_id = if capped {
                    // Length cap: force the end-of-translation token.
                    dec.force_token(EOS_ID);
                    EOS_ID
                } else {
                    let t0 = clock.now_ms();
                    let step = decode_step(&mut dec, enc.output(), weights, config)?;
                    let dt = clock.now_ms() - t0;
                    sim_ms += dt;
                    compute_acc += dt;
                    decode_steps += 1;
                    step.token_id
                };
                tokens.push(token_id);
                sentence_tokens += 1;
                records.push(DelayRecord {
                    index: tokens.len(),
                    sentence,
                    token_id,
                    speech_read_ms: frames_fed as f64 * shift,
                    clock_ms: sim_ms,
                    compute_ms: compute_acc,
                    capped: capped && token_id == EOS_ID,
                });
                compute_acc = 0.0;
                if token_id == EOS_ID {
                    reset_on_eos(&mut dec)?;
                    if capped {
                        capped_sentences += 1;
                    }
                    sentence += 1;
                    sentence_tokens = 0;
                    if source_done {
                        break;
                    }
                }
            }
        }
    }

    Ok(SessionResult {
        tokens,
        records,
        instr: SessionInstr {
            frames_consumed: frames_fed,
            states_encoded: enc.n_states(),
            chunks_read,
            sentences: sentence,
            capped_sentences,
            decode_steps,
            encoder: enc.instrumentation(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::NullClock;
    use crate::features::{synth_stream, SynthKind};
    use crate::model::{init_weights, SegmentSpec};
    use crate::policy::WaitK;

    fn desk_config() -> ModelConfig {
        ModelConfig {
            d_model: 16,
            n_heads: 2,
            n_enc_layers: 2,
            n_dec_layers: 1,
            d_ffn: 32,
            d_feat: 8,
            vocab_size: 24,
            segment: SegmentSpec::new(4, 8, 0),
            max_memory: 2,
            predecision_chunk: 8,
            waitk_k: 3,
            ..ModelConfig::desk_scale()
        }
    }

    fn run(
        config: &ModelConfig,
        seed: u64,
        frames: usize,
        k: usize,
        variant: EncoderVariant,
    ) -> SessionResult {
        let weights = init_weights(config, seed).unwrap();
        let stream = synth_stream(SynthKind::SeededNoise, frames, config.d_feat, seed).unwrap();
        let opts = SessionOptions {
            variant,
            max_target_len: 24,
        };
        run_streaming(&stream, &weights, config, &WaitK { k }, &opts, &mut NullClock).unwrap()
    }

    #[test]
    fn waitk_schedule_pins_first_token_delay() {
        // k chunks of W=8 states, 4 frames per state, 10 ms per frame.
        let config = desk_config();
        for k in [1usize, 2, 3] {
            let res = run(&config, 5, 640, k, EncoderVariant::Augmem);
            assert!(!res.records.is_empty());
            let want = (k * 8 * 4) as f64 * 10.0;
            assert_eq!(res.records[0].speech_read_ms, want, "k={k}");
            // Subsequent tokens follow the k+i-1 chunk schedule until the
            // source runs out.
            for rec in &res.records {
                let chunks = k + rec.index - 1;
                let scheduled = (chunks * 8 * 4) as f64 * 10.0;
                let total = 640.0 * 10.0;
                assert_eq!(rec.speech_read_ms, scheduled.min(total), "token {}", rec.index);
            }
        }
    }

    #[test]
    fn wait_infinity_reads_everything_first() {
        let config = desk_config();
        let res = run(&config, 6, 320, usize::MAX, EncoderVariant::Augmem);
        let total_ms = 3200.0;
        assert!(!res.records.is_empty());
        for rec in &res.records {
            assert_eq!(rec.speech_read_ms, total_ms);
        }
        assert_eq!(res.instr.frames_consumed, 320);
    }

    #[test]
    fn clock_never_trails_speech_read() {
        let config = desk_config();
        for seed in [1u64, 2, 3] {
            let res = run(&config, seed, 480, 2, EncoderVariant::Augmem);
            for rec in &res.records {
                assert!(
                    rec.clock_ms >= rec.speech_read_ms,
                    "token {}: clock {} < read {}",
                    rec.index,
                    rec.clock_ms,
                    rec.speech_read_ms
                );
            }
            // With a null clock, compute is free: emission time equals the
            // audio arrival time of the frames read so far.
            for rec in &res.records {
                assert_eq!(rec.clock_ms, rec.speech_read_ms);
            }
        }
    }

    #[test]
    fn runs_are_deterministic_and_terminate_via_cap_or_eos() {
        let config = desk_config();
        let a = run(&config, 7, 400, 1, EncoderVariant::Augmem);
        let b = run(&config, 7, 400, 1, EncoderVariant::Augmem);
        assert_eq!(a, b);
        assert_eq!(*a.tokens.last().unwrap(), EOS_ID);
        assert_eq!(a.instr.sentences, a.tokens.iter().filter(|&&t| t == EOS_ID).count());
        // Every record index is 1-based and dense.
        for (i, rec) in a.records.iter().enumerate() {
            assert_eq!(rec.index, i + 1);
        }
    }

    #[test]
    fn length_cap_forces_flagged_eos() {
        let config = desk_config();
        let weights = init_weights(&config, 11).unwrap();
        let stream = synth_stream(SynthKind::SeededNoise, 320, config.d_feat, 11).unwrap();
        let opts = SessionOptions {
            variant: EncoderVariant::Augmem,
            max_target_len: 3,
        };
        let res =
            run_streaming(&stream, &weights, &config, &WaitK { k: 1 }, &opts, &mut NullClock).unwrap();
        // Sentences are at most 3 tokens; the third token of any sentence
        // can only be the forced, flagged EOS.
        assert!(!res.records.is_empty());
        let mut len = 0;
        for rec in &res.records {
            len += 1;
            assert!(len <= 3);
            if len == 3 {
                assert_eq!(rec.token_id, EOS_ID);
                assert!(rec.capped);
            }
            if rec.token_id == EOS_ID {
                len = 0;
            }
        }
        assert_eq!(
            res.instr.capped_sentences,
            res.records.iter().filter(|r| r.capped).count()
        );
    }

    #[test]
    fn unread_frames_cannot_affect_emitted_prefix() {
        let config = desk_config();
        let weights = init_weights(&config, 13).unwrap();
        let base = synth_stream(SynthKind::SeededNoise, 640, config.d_feat, 13).unwrap();
        let opts = SessionOptions::default();
        let res = run_streaming(&base, &weights, &config, &WaitK { k: 2 }, &opts, &mut NullClock).unwrap();

        // Pick a token emitted before the stream was fully read and perturb
        // every frame it had not yet seen.
        let partial = res
            .records
            .iter()
            .filter(|r| r.speech_read_ms < 6400.0)
            .count();
        assert!(partial >= 2, "need tokens emitted mid-stream");
        let mid = partial / 2;
        let cutoff_frames = (res.records[mid].speech_read_ms / 10.0) as usize;
        assert!(cutoff_frames < 640, "need unread frames to perturb");
        let mut frames = base.frames.clone();
        for t in cutoff_frames..640 {
            for f in 0..config.d_feat {
                frames.set(t, f, -frames.get(t, f) + 0.25);
            }
        }
        let perturbed = FeatureStream {
            frames,
            frame_shift_ms: base.frame_shift_ms,
            source: base.source.clone(),
        };
        let res2 =
            run_streaming(&perturbed, &weights, &config, &WaitK { k: 2 }, &opts, &mut NullClock).unwrap();
        assert_eq!(
            res.tokens[..=mid],
            res2.tokens[..=mid],
            "tokens emitted before the perturbed frames changed"
        );
    }

    #[test]
    fn offline_variant_reads_all_audio_before_decoding() {
        let config = desk_config();
        let res = run(&config, 17, 320, 1, EncoderVariant::Full);
        assert!(!res.records.is_empty());
        for rec in &res.records {
            assert_eq!(rec.speech_read_ms, 3200.0);
        }
        assert_eq!(res.instr.states_encoded, 80);
    }

    #[test]
    fn unidirectional_variant_matches_token_stream_across_chunks() {
        let config = desk_config();
        let a = run(&config, 19, 320, 2, EncoderVariant::Unidirectional { recompute_chunk: 1 });
        let b = run(&config, 19, 320, 2, EncoderVariant::Unidirectional { recompute_chunk: 8 });
        assert_eq!(a.tokens, b.tokens, "recompute cadence changed tokens");
        assert!(b.instr.encoder.recompute_count < a.instr.encoder.recompute_count);
    }

    #[test]
    fn dimension_mismatch_is_rejected_up_front() {
        let config = desk_config();
        let weights = init_weights(&config, 23).unwrap();
        let stream = synth_stream(SynthKind::Constant, 64, config.d_feat * 2, 0).unwrap();
        let err = run_streaming(
            &stream,
            &weights,
            &config,
            &WaitK { k: 1 },
            &SessionOptions::default(),
            &mut NullClock,
        );
        assert!(matches!(err, Err(Error::Config(_))));
    }
}
