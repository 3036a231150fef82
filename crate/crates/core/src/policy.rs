//! Simultaneous read/write policies over fixed pre-decision chunks.
//!
//! Decisions are made once per chunk of `W` encoder states, not per state.
//! Wait-k is provided; the [`Policy`] trait keeps the session loop open to
//! content-aware policies, which may inspect the chunk summary.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// One policy decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    /// Read the next chunk of encoder states.
    Read,
    /// Emit one target token.
    Write,
}

/// Everything a policy may look at when deciding.
#[derive(Debug, Clone, Copy)]
pub struct PolicyContext<'a> {
    /// Chunks whose encoder states are visible to the decoder, including a
    /// fully encoded pending chunk.
    pub chunks_read: usize,
    /// Target tokens emitted so far (across the whole stream).
    pub tokens_written: usize,
    /// True once the entire source has been read and encoded; forces WRITE.
    pub source_done: bool,
    /// Mean of the most recent chunk's encoder states, when available.
    /// Wait-k ignores it.
    pub chunk_summary: Option<&'a [f32]>,
}

/// A simultaneous decision policy; pure function of the context.
pub trait Policy {
    fn decide(&self, ctx: &PolicyContext) -> Decision;
    /// Short name for logs and reports.
    fn name(&self) -> &'static str;
}

/// Wait-k over chunks: write the i-th token once `k + i - 1` chunks have
/// been read, then alternate. `k = usize::MAX` reads the entire source
/// first (offline / wait-infinity).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WaitK {
    pub k: usize,
}

impl Policy for WaitK {
    fn decide(&self, ctx: &PolicyContext) -> Decision {
        waitk_decide(ctx.chunks_read, ctx.tokens_written, self.k, ctx.source_done)
    }

    fn name(&self) -> &'static str {
        "waitk"
    }
}

/// The wait-k rule: WRITE iff the source is exhausted or the read/write gap
/// has reached `k`.
pub fn waitk_decide(chunks_read: usize, tokens_written: usize, k: usize, source_done: bool) -> Decision {
    if source_done || chunks_read.saturating_sub(tokens_written) >= k {
        Decision::Write
    } else {
        Decision::Read
    }
}

/// Mean over the rows of one chunk of encoder states. Provided for policies
/// that inspect content; wait-k never calls it.
pub fn summarize_chunk(rows: &Matrix) -> Result<Vec<f32>> {
    if rows.rows() == 0 {
        return Err(Error::EmptyInput("summarize_chunk"));
    }
    let mut mean = alloc::vec![0.0f32; rows.cols()];
    for i in 0..rows.rows() {
        for (m, &v) in mean.iter_mut().zip(rows.row(i).iter()) {
            *m += v;
        }
    }
    let n = rows.rows() as f32;
    for m in mean.iter_mut() {
        *m /= n;
    }
    Ok(mean)
}
