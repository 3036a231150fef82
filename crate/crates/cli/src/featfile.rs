//! Feature-file container, mirroring the checkpoint layout.
//!
//! Layout: magic `FBANK001`, one-line UTF-8 JSON header
//! `{n_frames, d_feat, frame_shift_ms}`, newline, then row-major
//! little-endian f32 frames. [`FeatureReader`] yields frames one at a time
//! without loading the file, and counts its peak buffered frames so tests
//! can pin the O(1) residency claim.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use augmem_core::features::FeatureStream;
use augmem_core::Matrix;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{read_header_line, read_magic};
use crate::error::{CliError, Result};

pub const FEATURE_MAGIC: &str = "FBANK001";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FeatureHeader {
    n_frames: usize,
    d_feat: usize,
    frame_shift_ms: f64,
}

/// Writes a whole stream to `path`.
pub fn write_features(path: &Path, stream: &FeatureStream) -> Result<()> {
    let header = FeatureHeader {
        n_frames: stream.n_frames(),
        d_feat: stream.d_feat(),
        frame_shift_ms: stream.frame_shift_ms,
    };
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(FEATURE_MAGIC.as_bytes())?;
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for t in 0..stream.n_frames() {
        for &v in stream.frames.row(t) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Incremental frame reader; holds at most one frame at a time.
pub struct FeatureReader {
    r: BufReader<File>,
    header: FeatureHeader,
    frames_read: usize,
    max_resident_frames: usize,
    source: String,
}

impl FeatureReader {
    pub fn open(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        read_magic(&mut r, FEATURE_MAGIC)?;
        let line = read_header_line(&mut r)?;
        let header: FeatureHeader = serde_json::from_slice(&line)?;
        if header.d_feat == 0 || header.n_frames == 0 {
            return Err(CliError::MalformedHeader(
                "feature header declares zero frames or dimensions".into(),
            ));
        }
        if !(header.frame_shift_ms > 0.0) || !header.frame_shift_ms.is_finite() {
            return Err(CliError::MalformedHeader(
                "frame_shift_ms must be positive and finite".into(),
            ));
        }
        Ok(Self {
            r,
            header,
            frames_read: 0,
            max_resident_frames: 0,
            source: path.display().to_string(),
        })
    }

    pub fn n_frames(&self) -> usize {
        self.header.n_frames
    }

    pub fn d_feat(&self) -> usize {
        self.header.d_feat
    }

    pub fn frame_shift_ms(&self) -> f64 {
        self.header.frame_shift_ms
    }

    /// Peak number of frames this reader ever held at once.
    pub fn max_resident_frames(&self) -> usize {
        self.max_resident_frames
    }

    /// Next frame, or `None` after the declared count; `Truncated` if the
    /// file ends early.
    pub fn next_frame(&mut self) -> Result<Option<Vec<f32>>> {
        if self.frames_read == self.header.n_frames {
            return Ok(None);
        }
        let n_bytes = self.header.d_feat * 4;
        let mut buf = vec![0u8; n_bytes];
        let mut got = 0;
        while got < n_bytes {
            let n = self.r.read(&mut buf[got..])?;
            if n == 0 {
                return Err(CliError::Truncated {
                    name: format!("frame {}", self.frames_read),
                    needed_bytes: n_bytes,
                    got_bytes: got,
                });
            }
            got += n;
        }
        self.frames_read += 1;
        self.max_resident_frames = self.max_resident_frames.max(1);
        Ok(Some(
            buf.chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect(),
        ))
    }
}

/// Loads a whole file via the streaming reader.
pub fn load_features(path: &Path) -> Result<FeatureStream> {
    let mut reader = FeatureReader::open(path)?;
    let mut frames = Matrix::empty(reader.d_feat());
    frames.reserve_rows(reader.n_frames());
    while let Some(frame) = reader.next_frame()? {
        frames.push_row(&frame)?;
    }
    Ok(FeatureStream {
        frames,
        frame_shift_ms: reader.frame_shift_ms(),
        source: reader.source.clone(),
    })
}
