//! `augmem sweep`: cartesian grid of runs over policy/architecture knobs,
//! one CSV row per cell.
//!
//! Quality column: BLEU of each cell's output against either an external
//! reference file or, when none is given, the offline full-attention
//! greedy decode of the same stream (a self-relative quality signal).
//! Sweep BLEU treats the whole run as one corpus sentence so differing
//! sentence segmentations across cells stay comparable; `eval` does strict
//! per-sentence scoring.
//!
//! Cells may run on several workers; results are merged by cell index so
//! the CSV order never depends on scheduling.

use std::path::PathBuf;

use augmem_core::metrics::{al_report, corpus_bleu};
use augmem_core::model::EOS_ID;
use augmem_core::session::EncoderVariant;
use augmem_core::SegmentSpec;
use clap::Args;

use crate::commands::{
    check_policy, load_model, obtain_stream, resolve_vocab, run_session, stream_seed,
};
use crate::error::{CliError, Result};
use crate::runconfig::{
    count_label, parse_count_or_inf, parse_list, parse_segment_list, parse_variant, variant_label,
};
use crate::vocab::Vocab;

pub const CSV_HEADER: &str = "variant,policy,k,seg_left,seg_center,seg_right,memory,chunk_w,\
                              seed,stream,frames,n_tokens,bleu,al_nca_ms,al_ca_ms,wall_ms";

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Checkpoint to load (config comes from its header).
    #[arg(long)]
    pub weights: PathBuf,
    /// Feature file input.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Synthetic input: kind:frames[:seed].
    #[arg(long)]
    pub synth: Option<String>,
    /// Decision policy (only "waitk").
    #[arg(long, default_value = "waitk")]
    pub policy: String,
    /// Comma-separated k values (counts or "inf").
    #[arg(long)]
    pub k: Option<String>,
    /// Semicolon-separated segment triples, e.g. "4,8,0;8,16,8".
    #[arg(long)]
    pub segment: Option<String>,
    /// Comma-separated memory bank caps (counts or "inf").
    #[arg(long)]
    pub memory: Option<String>,
    /// Comma-separated pre-decision chunk sizes.
    #[arg(long)]
    pub chunk: Option<String>,
    /// Comma-separated variants (augmem, unidir:CHUNK, full).
    #[arg(long, default_value = "augmem")]
    pub variant: String,
    /// Parallel workers for grid cells.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Reference translations, one sentence per line (defaults to the
    /// offline full-attention decode of the stream).
    #[arg(long = "ref")]
    pub reference: Option<PathBuf>,
    /// Vocabulary file (defaults to a synthetic one).
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Per-sentence token cap.
    #[arg(long, default_value_t = 200)]
    pub max_target_len: usize,
    /// CSV output path (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// One grid cell, in deterministic enumeration order.
#[derive(Debug, Clone)]
struct Cell {
    k: usize,
    segment: SegmentSpec,
    memory: usize,
    chunk: usize,
    variant: EncoderVariant,
}

fn enumerate_cells(
    ks: &[usize],
    segments: &[SegmentSpec],
    memories: &[usize],
    chunks: &[usize],
    variants: &[EncoderVariant],
) -> Vec<Cell> {
    let mut cells = Vec::new();
    for &variant in variants {
        for &segment in segments {
            for &memory in memories {
                for &chunk in chunks {
                    for &k in ks {
                        cells.push(Cell {
                            k,
                            segment,
                            memory,
                            chunk,
                            variant,
                        });
                    }
                }
            }
        }
    }
    cells
}

/// Escapes one CSV field (quotes only when needed).
fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Non-EOS surfaces of a whole run as one corpus sentence.
fn run_sentence(tokens: &[usize], vocab: &Vocab) -> Vec<String> {
    tokens
        .iter()
        .filter(|&&t| t != EOS_ID)
        .map(|&t| vocab.surface(t))
        .collect()
}

fn load_reference_sentence(path: &PathBuf) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path)?;
    let sent: Vec<String> = text.split_whitespace().map(str::to_string).collect();
    if sent.is_empty() {
        return Err(CliError::Data(format!(
            "reference file {} has no tokens",
            path.display()
        )));
    }
    Ok(sent)
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    check_policy(&args.policy)?;
    let (config, weights) = load_model(&args.weights, &Default::default())?;
    let stream = obtain_stream(&args.input, &args.synth, config.d_feat)?;
    let vocab = resolve_vocab(&args.vocab, &config)?;
    let seed = stream_seed(&args.synth);

    let ks = match &args.k {
        Some(s) => parse_list(s, "k", parse_count_or_inf)?,
        None => vec![config.waitk_k],
    };
    let segments = match &args.segment {
        Some(s) => parse_segment_list(s)?,
        None => vec![config.segment],
    };
    let memories = match &args.memory {
        Some(s) => parse_list(s, "memory", parse_count_or_inf)?,
        None => vec![config.max_memory],
    };
    let chunks = match &args.chunk {
        Some(s) => parse_list(s, "chunk", |t| {
            t.parse::<usize>()
                .map_err(|_| CliError::Usage(format!("chunk {t:?} is not a count")))
        })?,
        None => vec![config.predecision_chunk],
    };
    let variants = parse_list(&args.variant, "variant", parse_variant)?;
    let cells = enumerate_cells(&ks, &segments, &memories, &chunks, &variants);
    log::info!("sweep: {} cells on {} workers", cells.len(), args.workers.max(1));

    // Reference sentence: external file, or the offline decode.
    let reference = match &args.reference {
        Some(path) => load_reference_sentence(path)?,
        None => {
            let offline = run_session(
                &stream,
                &weights,
                &config,
                usize::MAX,
                EncoderVariant::Full,
                args.max_target_len,
            )?;
            run_sentence(&offline.result.tokens, &vocab)
        }
    };
    let ref_len = reference.len().max(1);

    let workers = args.workers.max(1).min(cells.len());
    let mut rows: Vec<Option<String>> = vec![None; cells.len()];
    std::thread::scope(|scope| -> Result<()> {
        let mut handles = Vec::new();
        for wid in 0..workers {
            let cells = &cells;
            let config = &config;
            let weights = &weights;
            let stream = &stream;
            let vocab = &vocab;
            let reference = &reference;
            let max_len = args.max_target_len;
            handles.push(scope.spawn(move || -> Result<Vec<(usize, String)>> {
                let mut local = Vec::new();
                for (idx, cell) in cells.iter().enumerate() {
                    if idx % workers != wid {
                        continue;
                    }
                    let mut cell_config = config.clone();
                    cell_config.segment = cell.segment;
                    cell_config.max_memory = cell.memory;
                    cell_config.predecision_chunk = cell.chunk;
                    cell_config.waitk_k = cell.k;
                    cell_config
                        .validate()
                        .map_err(|e| CliError::Usage(format!("grid cell {idx}: {e}")))?;
                    let outcome =
                        run_session(stream, weights, &cell_config, cell.k, cell.variant, max_len)?;
                    let al = al_report(
                        &outcome.result.records,
                        stream.n_frames(),
                        cell_config.frame_shift_ms,
                        ref_len,
                    )?;
                    let hyp = run_sentence(&outcome.result.tokens, vocab);
                    let bleu = corpus_bleu(&[hyp], &[reference.clone()])?;
                    let row = format!(
                        "{},{},{},{},{},{},{},{},{},{},{},{},{:.6},{:.3},{:.3},{:.3}",
                        variant_label(cell.variant),
                        "waitk",
                        count_label(cell.k),
                        cell.segment.left,
                        cell.segment.center,
                        cell.segment.right,
                        count_label(cell.memory),
                        cell.chunk,
                        seed,
                        csv_field(&stream.source),
                        stream.n_frames(),
                        outcome.result.tokens.len(),
                        bleu,
                        al.al_nca_ms,
                        al.al_ca_ms,
                        outcome.wall_ms,
                    );
                    local.push((idx, row));
                }
                Ok(local)
            }));
        }
        for handle in handles {
            let local = handle.join().expect("sweep worker panicked")?;
            for (idx, row) in local {
                rows[idx] = Some(row);
            }
        }
        Ok(())
    })?;

    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    for row in rows {
        csv.push_str(&row.expect("every cell produces a row"));
        csv.push('\n');
    }
    crate::commands::emit(&args.out, csv.trim_end())?;
    Ok(())
}
