//! `augmem simulate`: run one stream end to end and write a run log.

use std::path::PathBuf;

use clap::Args;

use crate::commands::{
    build_run_log, check_policy, load_model, obtain_stream, resolve_vocab, run_session,
};
use crate::error::Result;
use crate::runconfig::{parse_count_or_inf, parse_variant};
use crate::runlog::write_run_log;

use super::init::parse_overrides;

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Checkpoint to load (config comes from its header).
    #[arg(long)]
    pub weights: PathBuf,
    /// Feature file input.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Synthetic input: kind:frames[:seed], kind in constant|sine|noise.
    #[arg(long)]
    pub synth: Option<String>,
    /// Decision policy (only "waitk").
    #[arg(long, default_value = "waitk")]
    pub policy: String,
    /// Wait-k k (a count or "inf"); defaults to the config's value.
    #[arg(long)]
    pub k: Option<String>,
    /// Override segment sizes as L,C,R.
    #[arg(long)]
    pub segment: Option<String>,
    /// Override maximum memory bank count (a count or "inf").
    #[arg(long)]
    pub memory: Option<String>,
    /// Override pre-decision chunk size W.
    #[arg(long)]
    pub chunk: Option<usize>,
    /// Encoder variant: augmem, unidir:CHUNK, or full.
    #[arg(long, default_value = "augmem")]
    pub variant: String,
    /// Vocabulary file (defaults to a synthetic one).
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Per-sentence token cap.
    #[arg(long, default_value_t = 200)]
    pub max_target_len: usize,
    /// Run log output path (summary always goes to stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    check_policy(&args.policy)?;
    let overrides = parse_overrides(&args.segment, &args.memory, args.chunk, &None)?;
    let (config, weights) = load_model(&args.weights, &overrides)?;
    let k = match &args.k {
        Some(s) => parse_count_or_inf(s)?,
        None => config.waitk_k,
    };
    let variant = parse_variant(&args.variant)?;
    let stream = obtain_stream(&args.input, &args.synth, config.d_feat)?;
    let vocab = resolve_vocab(&args.vocab, &config)?;

    log::info!(
        "simulate: {} frames, k={}, variant={}",
        stream.n_frames(),
        crate::runconfig::count_label(k),
        args.variant
    );
    let outcome = run_session(&stream, &weights, &config, k, variant, args.max_target_len)?;
    let run_log = build_run_log(
        &outcome,
        &stream,
        &config,
        k,
        variant,
        args.max_target_len,
        &vocab,
    )?;
    if let Some(path) = &args.out {
        write_run_log(path, &run_log)?;
    }

    let summary = serde_json::json!({
        "stream": run_log.stream,
        "frames": run_log.n_frames,
        "tokens": run_log.tokens.len(),
        "sentences": run_log.instr.sentences,
        "al_nca_ms": run_log.al.al_nca_ms,
        "al_ca_ms": run_log.al.al_ca_ms,
        "wall_ms": run_log.wall_ms,
        "out": args.out.as_ref().map(|p| p.display().to_string()),
    });
    println!("{summary}");
    Ok(())
}
