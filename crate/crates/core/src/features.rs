//! Acoustic feature streams and deterministic synthetic generators.
//!
//! A [`FeatureStream`] is a time-major matrix of feature frames with a fixed
//! frame shift; file ingestion lives in the CLI crate, while the synthetic
//! generators here keep core tests and benches self-contained.

use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// A `[T, d_feat]` block of feature frames plus timing metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStream {
    pub frames: Matrix,
    pub frame_shift_ms: f64,
    /// Free-form origin label (file path or synth descriptor).
    pub source: String,
}

impl FeatureStream {
    pub fn n_frames(&self) -> usize {
        self.frames.rows()
    }

    pub fn d_feat(&self) -> usize {
        self.frames.cols()
    }

    /// Total audio duration represented by the stream.
    pub fn duration_ms(&self) -> f64 {
        self.n_frames() as f64 * self.frame_shift_ms
    }
}

/// Deterministic synthetic stream families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthKind {
    /// Every value 1.0.
    Constant,
    /// `sin(2π(t/32 + f/d_feat))` at frame `t`, dimension `f`.
    Sine,
    /// Seeded uniform noise in [-1, 1).
    SeededNoise,
}

/// Generates a synthetic stream; a pure function of its arguments.
pub fn synth_stream(kind: SynthKind, n_frames: usize, d_feat: usize, seed: u64) -> Result<FeatureStream> {
    if n_frames == 0 {
        return Err(Error::EmptyInput("synth_stream: n_frames"));
    }
    if d_feat == 0 {
        return Err(Error::EmptyInput("synth_stream: d_feat"));
    }
    let data: Vec<f32> = match kind {
        SynthKind::Constant => alloc::vec![1.0; n_frames * d_feat],
        SynthKind::Sine => {
            let mut data = Vec::with_capacity(n_frames * d_feat);
            for t in 0..n_frames {
                for f in 0..d_feat {
                    let phase = t as f64 / 32.0 + f as f64 / d_feat as f64;
                    data.push(libm::sin(2.0 * core::f64::consts::PI * phase) as f32);
                }
            }
            data
        }
        SynthKind::SeededNoise => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n_frames * d_feat).map(|_| rng.gen_range(-1.0..1.0)).collect()
        }
    };
    Ok(FeatureStream {
        frames: Matrix::new(n_frames, d_feat, data)?,
        frame_shift_ms: 10.0,
        source: alloc::format!("synth:{kind:?}:{n_frames}x{d_feat}:{seed}"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_stream_is_all_ones() {
        let s = synth_stream(SynthKind::Constant, 5, 3, 0).unwrap();
        assert!(s.frames.data().iter().all(|&v| v == 1.0));
        assert_eq!(s.n_frames(), 5);
        assert_eq!(s.d_feat(), 3);
        assert_eq!(s.duration_ms(), 50.0);
    }

    #[test]
    fn same_seed_gives_identical_noise() {
        let a = synth_stream(SynthKind::SeededNoise, 20, 8, 123).unwrap();
        let b = synth_stream(SynthKind::SeededNoise, 20, 8, 123).unwrap();
        assert_eq!(a.frames, b.frames);
        let c = synth_stream(SynthKind::SeededNoise, 20, 8, 124).unwrap();
        assert_ne!(a.frames, c.frames);
    }

    #[test]
    fn sine_matches_closed_form() {
        let d_feat = 16;
        let s = synth_stream(SynthKind::Sine, 64, d_feat, 0).unwrap();
        for t in 0..64 {
            for f in 0..d_feat {
                let want = (2.0 * core::f64::consts::PI * (t as f64 / 32.0 + f as f64 / d_feat as f64)).sin();
                let got = s.frames.get(t, f) as f64;
                assert!((got - want).abs() < 1e-6, "t={t} f={f}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn empty_request_is_an_error() {
        assert!(matches!(
            synth_stream(SynthKind::Constant, 0, 8, 0),
            Err(Error::EmptyInput(_))
        ));
    }
}
