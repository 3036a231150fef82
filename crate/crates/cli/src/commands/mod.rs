//! Subcommand implementations and the plumbing they share.

pub mod bench;
pub mod eval;
pub mod init;
pub mod simulate;
pub mod sweep;

use std::path::{Path, PathBuf};
use std::time::Instant;

use augmem_core::features::{synth_stream, FeatureStream};
use augmem_core::metrics::al_report;
use augmem_core::policy::WaitK;
use augmem_core::session::{run_streaming, EncoderVariant, SessionOptions, SessionResult};
use augmem_core::{ModelConfig, WeightSet};

use crate::checkpoint::load_checkpoint;
use crate::error::{CliError, Result};
use crate::runconfig::{apply_overrides, count_label, parse_synth, variant_label, ModelOverrides};
use crate::runlog::{surfaces_for, RunLog};
use crate::timer::MonotonicClock;
use crate::vocab::Vocab;

/// Loads a checkpoint and applies command-line overrides.
pub fn load_model(weights: &Path, overrides: &ModelOverrides) -> Result<(ModelConfig, WeightSet)> {
    let (mut config, weights) = load_checkpoint(weights)?;
    apply_overrides(&mut config, overrides)?;
    Ok((config, weights))
}

/// Resolves the mutually exclusive `--input` / `--synth` pair.
pub fn obtain_stream(
    input: &Option<PathBuf>,
    synth: &Option<String>,
    d_feat: usize,
) -> Result<FeatureStream> {
    match (input, synth) {
        (Some(path), None) => crate::featfile::load_features(path),
        (None, Some(spec)) => {
            let (kind, frames, seed) = parse_synth(spec)?;
            Ok(synth_stream(kind, frames, d_feat, seed)?)
        }
        _ => Err(CliError::Usage(
            "exactly one of --input and --synth is required".into(),
        )),
    }
}

/// The only policy this binary ships.
pub fn check_policy(name: &str) -> Result<()> {
    if name == "waitk" {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "unknown policy {name:?} (only \"waitk\" is available)"
        )))
    }
}

/// Synth seed of a stream spec, or 0 for file input (used in CSV rows).
pub fn stream_seed(synth: &Option<String>) -> u64 {
    synth
        .as_ref()
        .and_then(|s| parse_synth(s).ok())
        .map(|(_, _, seed)| seed)
        .unwrap_or(0)
}

pub struct RunOutcome {
    pub result: SessionResult,
    pub wall_ms: f64,
}

/// Runs one stream under wait-k with a real wall clock.
pub fn run_session(
    stream: &FeatureStream,
    weights: &WeightSet,
    config: &ModelConfig,
    k: usize,
    variant: EncoderVariant,
    max_target_len: usize,
) -> Result<RunOutcome> {
    let policy = WaitK { k };
    let opts = SessionOptions {
        variant,
        max_target_len,
    };
    let started = Instant::now();
    let mut clock = MonotonicClock::new();
    let result = run_streaming(stream, weights, config, &policy, &opts, &mut clock)?;
    Ok(RunOutcome {
        result,
        wall_ms: started.elapsed().as_secs_f64() * 1e3,
    })
}

/// Assembles the full run log for one outcome. With no external reference,
/// the emitted token count stands in for the reference length in lagging.
pub fn build_run_log(
    outcome: &RunOutcome,
    stream: &FeatureStream,
    config: &ModelConfig,
    k: usize,
    variant: EncoderVariant,
    max_target_len: usize,
    vocab: &Vocab,
) -> Result<RunLog> {
    let al = al_report(
        &outcome.result.records,
        stream.n_frames(),
        config.frame_shift_ms,
        outcome.result.records.len().max(1),
    )?;
    Ok(RunLog {
        config: config.clone(),
        options: SessionOptions {
            variant,
            max_target_len,
        },
        variant: variant_label(variant),
        policy: format!("waitk:{}", count_label(k)),
        stream: stream.source.clone(),
        n_frames: stream.n_frames(),
        frame_shift_ms: stream.frame_shift_ms,
        tokens: outcome.result.tokens.clone(),
        surfaces: surfaces_for(&outcome.result.tokens, vocab),
        records: outcome.result.records.clone(),
        instr: outcome.result.instr.clone(),
        al,
        wall_ms: outcome.wall_ms,
    })
}

/// Loads the vocabulary (or synthesizes one) and checks it against the
/// config's vocabulary size.
pub fn resolve_vocab(path: &Option<PathBuf>, config: &ModelConfig) -> Result<Vocab> {
    let vocab = match path {
        Some(p) => Vocab::load(p)?,
        None => Vocab::synthetic(config.vocab_size)?,
    };
    if vocab.len() != config.vocab_size {
        return Err(CliError::Usage(format!(
            "vocabulary has {} tokens but the config expects {}",
            vocab.len(),
            config.vocab_size
        )));
    }
    Ok(vocab)
}

/// Writes `text` to `--out` when given, otherwise to stdout.
pub fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, text)?;
            Ok(())
        }
        None => {
            println!("{text}");
            Ok(())
        }
    }
}
