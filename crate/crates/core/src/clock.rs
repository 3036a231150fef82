//! Compute-time measurement behind a trait so the core stays
//! platform-independent.
//!
//! The session charges measured compute time onto its simulated real-time
//! clock. Tests use [`NullClock`] for fully deterministic runs (zero compute
//! cost); the CLI provides a monotonic wall-clock implementation.

/// Source of elapsed milliseconds for compute-time measurement.
pub trait Clock {
    /// Current reading in milliseconds. Only differences are meaningful;
    /// the reading must be non-decreasing.
    fn now_ms(&mut self) -> f64;
}

/// Clock that never advances: compute time measures as zero, making runs
/// bit-reproducible.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullClock;

impl Clock for NullClock {
    fn now_ms(&mut self) -> f64 {
        0.0
    }
}
