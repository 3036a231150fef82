//! Streaming simultaneous speech-translation inference with a bounded-memory
//! transformer encoder.
//!
//! The crate is organised around the stages of a streaming run:
//!
//! - [`numerics`] — dense f32 kernels (matmul, softmax, layer norm, the
//!   convolutional subsampling front end).
//! - [`model`] — configuration, the named-weight container and deterministic
//!   initialization.
//! - [`features`] — acoustic feature streams and synthetic stream generators.
//! - [`encoder`] — the augmented-memory streaming encoder plus two reference
//!   encoders (full attention, unidirectional mask).
//! - [`decoder`] — incremental transformer decoder with a self-attention cache
//!   and EOS-triggered reset.
//! - [`policy`] — chunk-based simultaneous read/write policies (wait-k).
//! - [`session`] — the streaming loop tying the above together on a simulated
//!   real-time clock, producing per-token delay records.
//! - [`metrics`] — Average Lagging (computation-aware and not) and a small
//!   corpus BLEU scorer.
//!
//! The crate is `no_std` + `alloc`; anything touching files, wall clocks or
//! processes lives in the companion CLI crate. Wall-clock measurement is
//! abstracted behind [`clock::Clock`].

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod clock;
pub mod decoder;
pub mod encoder;
pub mod error;
pub mod features;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod policy;
pub mod session;

pub use error::Error;
pub use model::{ModelConfig, SegmentSpec, WeightSet};
pub use numerics::Matrix;
