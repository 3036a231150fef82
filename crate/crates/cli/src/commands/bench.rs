//! `augmem bench`: long-stream encoder resource profile.
//!
//! Feeds a stream frame by frame, attributing wall time to "events" —
//! completed segments for the augmented-memory encoder, recomputes for the
//! unidirectional baseline, the single batch pass for the offline encoder —
//! and reports per-event times with a least-squares trend, plus peak
//! retained rows and attention key widths. A flat trend demonstrates
//! stream-length-independent per-segment cost; the baseline's growing
//! events demonstrate the quadratic total.

use std::path::PathBuf;
use std::time::Instant;

use augmem_core::encoder::{encode_full, AugmemEncoder, UnidirEncoder};
use augmem_core::features::FeatureStream;
use augmem_core::session::EncoderVariant;
use augmem_core::{ModelConfig, WeightSet};
use clap::Args;
use serde::Serialize;

use crate::commands::{load_model, obtain_stream};
use crate::error::Result;
use crate::runconfig::{count_label, parse_list, parse_variant, variant_label};

use super::init::parse_overrides;

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Checkpoint to load (config comes from its header).
    #[arg(long)]
    pub weights: PathBuf,
    /// Synthetic input: kind:frames[:seed].
    #[arg(long, default_value = "noise:2000")]
    pub synth: Option<String>,
    /// Feature file input (overrides --synth's default).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Comma-separated variants to profile.
    #[arg(long, default_value = "augmem,unidir:1,unidir:8")]
    pub variant: String,
    /// Override segment sizes as L,C,R.
    #[arg(long)]
    pub segment: Option<String>,
    /// Override maximum memory bank count (a count or "inf").
    #[arg(long)]
    pub memory: Option<String>,
    /// Override pre-decision chunk size W.
    #[arg(long)]
    pub chunk: Option<usize>,
    /// Report output path (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Profile of one encoder variant over one stream.
#[derive(Debug, Clone, Serialize)]
pub struct VariantProfile {
    pub variant: String,
    pub frames: usize,
    pub states: usize,
    /// Completed segments, recomputes, or 1 for the offline pass.
    pub events: usize,
    pub event_ms: Vec<f64>,
    pub mean_event_ms: f64,
    pub slope_ms_per_event: f64,
    /// Slope as a fraction of the mean; ~0 means flat per-event cost.
    pub slope_over_mean: f64,
    pub first_event_ms: f64,
    pub last_event_ms: f64,
    pub max_key_rows: usize,
    pub max_resident_rows: usize,
    pub recompute_count: usize,
    pub rows_recomputed: usize,
    /// N + L + C + R when the memory cap is finite (augmem key-width bound).
    pub key_bound: Option<usize>,
    pub key_bound_ok: Option<bool>,
    pub wall_ms: f64,
}

/// Least-squares slope and mean of `ys` against x = 0, 1, 2, ...
pub fn least_squares_slope(ys: &[f64]) -> (f64, f64) {
    let n = ys.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean_y = ys.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (0.0, mean_y);
    }
    let mean_x = (n - 1) as f64 / 2.0;
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &y) in ys.iter().enumerate() {
        let dx = i as f64 - mean_x;
        num += dx * (y - mean_y);
        den += dx * dx;
    }
    (num / den, mean_y)
}

fn finish_profile(
    variant: EncoderVariant,
    stream: &FeatureStream,
    states: usize,
    event_ms: Vec<f64>,
    instr: &augmem_core::encoder::EncoderInstr,
    config: &ModelConfig,
    wall_ms: f64,
) -> VariantProfile {
    let (slope, mean) = least_squares_slope(&event_ms);
    let key_bound = match variant {
        EncoderVariant::Augmem if config.max_memory != usize::MAX => Some(
            config.max_memory
                + config.segment.left
                + config.segment.center
                + config.segment.right,
        ),
        _ => None,
    };
    VariantProfile {
        variant: variant_label(variant),
        frames: stream.n_frames(),
        states,
        events: event_ms.len(),
        first_event_ms: event_ms.first().copied().unwrap_or(0.0),
        last_event_ms: event_ms.last().copied().unwrap_or(0.0),
        event_ms,
        mean_event_ms: mean,
        slope_ms_per_event: slope,
        slope_over_mean: if mean > 0.0 { slope / mean } else { 0.0 },
        max_key_rows: instr.max_key_rows,
        max_resident_rows: instr.max_resident_rows,
        recompute_count: instr.recompute_count,
        rows_recomputed: instr.rows_recomputed,
        key_bound,
        key_bound_ok: key_bound.map(|b| instr.max_key_rows <= b),
        wall_ms,
    }
}

/// Streams the input through one encoder variant, timing per-event work.
pub fn profile_variant(
    variant: EncoderVariant,
    stream: &FeatureStream,
    weights: &WeightSet,
    config: &ModelConfig,
) -> Result<VariantProfile> {
    let started = Instant::now();
    match variant {
        EncoderVariant::Full => {
            let out = encode_full(&stream.frames, weights, config)?;
            let wall = started.elapsed().as_secs_f64() * 1e3;
            Ok(finish_profile(
                variant,
                stream,
                out.n_states(),
                vec![wall],
                &Default::default(),
                config,
                wall,
            ))
        }
        EncoderVariant::Augmem => {
            let mut enc = AugmemEncoder::new(config, weights)?;
            let mut event_ms = Vec::new();
            let mut bucket = 0.0f64;
            let mut seen_events = 0usize;
            let mut step = |enc: &AugmemEncoder, dt: f64, bucket: &mut f64| {
                *bucket += dt;
                let done = enc.instrumentation().segments_encoded;
                if done > seen_events {
                    let new = done - seen_events;
                    for _ in 0..new {
                        event_ms.push(*bucket / new as f64);
                    }
                    *bucket = 0.0;
                    seen_events = done;
                }
            };
            for t in 0..stream.n_frames() {
                let t0 = Instant::now();
                enc.push_frame(stream.frames.row(t))?;
                step(&enc, t0.elapsed().as_secs_f64() * 1e3, &mut bucket);
            }
            let t0 = Instant::now();
            enc.close()?;
            step(&enc, t0.elapsed().as_secs_f64() * 1e3, &mut bucket);
            let wall = started.elapsed().as_secs_f64() * 1e3;
            Ok(finish_profile(
                variant,
                stream,
                enc.n_states(),
                event_ms,
                enc.instrumentation(),
                config,
                wall,
            ))
        }
        EncoderVariant::Unidirectional { recompute_chunk } => {
            let mut enc = UnidirEncoder::new(config, weights, recompute_chunk)?;
            let mut event_ms = Vec::new();
            let mut bucket = 0.0f64;
            let mut seen_events = 0usize;
            let mut step = |enc: &UnidirEncoder, dt: f64, bucket: &mut f64| {
                *bucket += dt;
                let done = enc.instrumentation().recompute_count;
                if done > seen_events {
                    let new = done - seen_events;
                    for _ in 0..new {
                        event_ms.push(*bucket / new as f64);
                    }
                    *bucket = 0.0;
                    seen_events = done;
                }
            };
            for t in 0..stream.n_frames() {
                let t0 = Instant::now();
                enc.push_frame(stream.frames.row(t))?;
                step(&enc, t0.elapsed().as_secs_f64() * 1e3, &mut bucket);
            }
            let t0 = Instant::now();
            enc.close()?;
            step(&enc, t0.elapsed().as_secs_f64() * 1e3, &mut bucket);
            let wall = started.elapsed().as_secs_f64() * 1e3;
            Ok(finish_profile(
                variant,
                stream,
                enc.n_states(),
                event_ms,
                enc.instrumentation(),
                config,
                wall,
            ))
        }
    }
}

pub fn cmd_bench(args: &BenchArgs) -> Result<()> {
    let overrides = parse_overrides(&args.segment, &args.memory, args.chunk, &None)?;
    let (config, weights) = load_model(&args.weights, &overrides)?;
    // --input takes priority over the default synth spec.
    let synth = if args.input.is_some() { None } else { args.synth.clone() };
    let stream = obtain_stream(&args.input, &synth, config.d_feat)?;
    let variants = parse_list(&args.variant, "variant", parse_variant)?;

    let mut profiles = Vec::new();
    for &variant in &variants {
        log::info!(
            "bench: {} over {} frames (memory {})",
            variant_label(variant),
            stream.n_frames(),
            count_label(config.max_memory)
        );
        profiles.push(profile_variant(variant, &stream, &weights, &config)?);
    }
    crate::commands::emit(&args.out, &serde_json::to_string_pretty(&profiles)?)?;
    Ok(())
}
