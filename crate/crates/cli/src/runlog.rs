//! JSON run log: everything one simulation produced, written as a single
//! pretty-printed JSON document so downstream tools (and the eval command)
//! can consume it without this binary.
//!
//! Determinism contract: two runs with the same config and seed agree on
//! every field except measured timing (`clock_ms`, `compute_ms`,
//! `al_ca_ms`, `wall_ms`). [`strip_timing`] zeroes exactly those fields so
//! the remainder can be compared byte-for-byte.

use std::fs;
use std::path::Path;

use augmem_core::metrics::ALReport;
use augmem_core::session::{DelayRecord, SessionInstr, SessionOptions};
use augmem_core::ModelConfig;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::vocab::Vocab;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub config: ModelConfig,
    pub options: SessionOptions,
    pub variant: String,
    pub policy: String,
    pub stream: String,
    pub n_frames: usize,
    pub frame_shift_ms: f64,
    pub tokens: Vec<usize>,
    pub surfaces: Vec<String>,
    pub records: Vec<DelayRecord>,
    pub instr: SessionInstr,
    /// Lagging with the emitted length standing in for a reference length.
    pub al: ALReport,
    pub wall_ms: f64,
}

pub fn write_run_log(path: &Path, log: &RunLog) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(log)?)?;
    Ok(())
}

pub fn read_run_log(path: &Path) -> Result<RunLog> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Copy with all measured-time fields zeroed; what remains must be
/// identical across reruns of the same (config, seed).
pub fn strip_timing(log: &RunLog) -> RunLog {
    let mut out = log.clone();
    out.wall_ms = 0.0;
    out.al.al_ca_ms = 0.0;
    for rec in &mut out.records {
        rec.clock_ms = 0.0;
        rec.compute_ms = 0.0;
    }
    out
}

/// Sentence groups of surface tokens, EOS markers excluded. The trailing
/// sentence always ends at EOS because runs terminate there.
pub fn sentences(log: &RunLog) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    for (tok, surface) in log.tokens.iter().zip(&log.surfaces) {
        if *tok == augmem_core::model::EOS_ID {
            out.push(core::mem::take(&mut cur));
        } else {
            cur.push(surface.clone());
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Maps ids to surfaces with the given vocabulary.
pub fn surfaces_for(tokens: &[usize], vocab: &Vocab) -> Vec<String> {
    tokens.iter().map(|&t| vocab.surface(t)).collect()
}
