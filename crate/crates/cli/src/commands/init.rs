//! `augmem init`: build a seeded checkpoint (and optionally a vocabulary).

use std::path::PathBuf;

use augmem_core::model::manifest;
use clap::Args;

use crate::checkpoint::{file_digest, init_and_save};
use crate::error::{CliError, Result};
use crate::runconfig::{
    load_config, parse_count_or_inf, parse_segment, preset, ModelOverrides,
};
use crate::vocab::Vocab;

#[derive(Debug, Args)]
pub struct InitArgs {
    /// Built-in configuration: "desk" or "full".
    #[arg(long, conflicts_with = "config")]
    pub preset: Option<String>,
    /// JSON config file (fields not given take defaults).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override segment sizes as L,C,R (encoder-state rate).
    #[arg(long)]
    pub segment: Option<String>,
    /// Override maximum memory bank count (a count or "inf").
    #[arg(long)]
    pub memory: Option<String>,
    /// Override pre-decision chunk size W.
    #[arg(long)]
    pub chunk: Option<usize>,
    /// Override default wait-k k (a count or "inf").
    #[arg(long)]
    pub k: Option<String>,
    /// Weight initialization seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Checkpoint output path.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write a synthetic vocabulary here.
    #[arg(long)]
    pub vocab_out: Option<PathBuf>,
}

pub fn parse_overrides(
    segment: &Option<String>,
    memory: &Option<String>,
    chunk: Option<usize>,
    k: &Option<String>,
) -> Result<ModelOverrides> {
    Ok(ModelOverrides {
        segment: segment.as_deref().map(parse_segment).transpose()?,
        memory: memory.as_deref().map(parse_count_or_inf).transpose()?,
        chunk,
        k: k.as_deref().map(parse_count_or_inf).transpose()?,
    })
}

pub fn cmd_init(args: &InitArgs) -> Result<()> {
    let mut config = match (&args.config, &args.preset) {
        (Some(path), None) => load_config(path)?,
        (None, name) => preset(name.as_deref().unwrap_or("desk"))?,
        (Some(_), Some(_)) => {
            return Err(CliError::Usage(
                "--config and --preset are mutually exclusive".into(),
            ))
        }
    };
    let overrides = parse_overrides(&args.segment, &args.memory, args.chunk, &args.k)?;
    crate::runconfig::apply_overrides(&mut config, &overrides)?;

    init_and_save(&args.out, &config, args.seed)?;
    if let Some(vocab_path) = &args.vocab_out {
        Vocab::synthetic(config.vocab_size)?.save(vocab_path)?;
    }

    let specs = manifest(&config);
    let params: usize = specs.iter().map(|s| s.rows * s.cols).sum();
    let bytes = std::fs::metadata(&args.out)?.len();
    let summary = serde_json::json!({
        "out": args.out.display().to_string(),
        "tensors": specs.len(),
        "params": params,
        "bytes": bytes,
        "digest": format!("{:016x}", file_digest(&args.out)?),
        "seed": args.seed,
    });
    println!("{summary}");
    log::info!("wrote checkpoint with {} tensors ({params} params)", specs.len());
    Ok(())
}
