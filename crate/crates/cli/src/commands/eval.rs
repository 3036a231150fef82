//! `augmem eval`: recompute metrics from a stored run log.
//!
//! Lagging is recomputed from the log's per-token records. With `--ref`,
//! BLEU is scored per sentence (one reference line per emitted sentence,
//! whitespace-tokenised) and the reference token count becomes the lagging
//! normaliser; without it, the log's own length is used and BLEU is
//! omitted.

use std::path::PathBuf;

use augmem_core::metrics::{al_report, corpus_bleu};
use clap::Args;

use crate::error::{CliError, Result};
use crate::runlog::{read_run_log, sentences};

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Run log written by `simulate --out`.
    #[arg(long)]
    pub run: PathBuf,
    /// Reference translations, one line per sentence.
    #[arg(long = "ref")]
    pub reference: Option<PathBuf>,
    /// Report output path (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let log = read_run_log(&args.run)?;
    let hyp_sentences = sentences(&log);

    let mut bleu = None;
    let mut ref_len = log.records.len().max(1);
    if let Some(ref_path) = &args.reference {
        let text = std::fs::read_to_string(ref_path)?;
        let ref_sentences: Vec<Vec<String>> = text
            .lines()
            .map(|l| l.split_whitespace().map(str::to_string).collect())
            .collect();
        if ref_sentences.len() != hyp_sentences.len() {
            return Err(CliError::Data(format!(
                "run has {} sentences but the reference file has {} lines",
                hyp_sentences.len(),
                ref_sentences.len()
            )));
        }
        ref_len = ref_sentences.iter().map(Vec::len).sum::<usize>().max(1);
        bleu = Some(corpus_bleu(&hyp_sentences, &ref_sentences)?);
    }

    let al = al_report(&log.records, log.n_frames, log.frame_shift_ms, ref_len)?;
    let report = serde_json::json!({
        "run": args.run.display().to_string(),
        "stream": log.stream,
        "frames": log.n_frames,
        "n_tokens": log.records.len(),
        "n_sentences": hyp_sentences.len(),
        "capped_sentences": log.instr.capped_sentences,
        "al_nca_ms": al.al_nca_ms,
        "al_ca_ms": al.al_ca_ms,
        "stored_al_nca_ms": log.al.al_nca_ms,
        "bleu": bleu,
    });
    crate::commands::emit(&args.out, &serde_json::to_string_pretty(&report)?)?;
    Ok(())
}
