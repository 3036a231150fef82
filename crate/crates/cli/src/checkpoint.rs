//! Checkpoint container: config plus every named tensor in one file.
//!
//! Layout: the magic string `AUGMEM01`, a single-line UTF-8 JSON header
//! holding the config and an ordered tensor manifest (name, rows, cols,
//! byte offset into the payload), a newline, then the raw little-endian
//! f32 payloads concatenated in manifest order. The manifest order is the
//! canonical order generated from the config, so a checkpoint is valid iff
//! its header matches what the embedded config implies.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use augmem_core::model::{manifest, init_weights};
use augmem_core::{Matrix, ModelConfig, WeightSet};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const CHECKPOINT_MAGIC: &str = "AUGMEM01";

/// Maximum accepted header line, to bound memory on garbage input.
const MAX_HEADER_BYTES: usize = 16 * 1024 * 1024;

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
    offset: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    tensors: Vec<TensorEntry>,
}

/// Writes a validated (config, weights) pair to `path`.
pub fn save_checkpoint(path: &Path, config: &ModelConfig, weights: &WeightSet) -> Result<()> {
    config.validate()?;
    weights.validate(config)?;
    let specs = manifest(config);
    let mut tensors = Vec::with_capacity(specs.len());
    let mut offset = 0u64;
    for spec in &specs {
        tensors.push(TensorEntry {
            name: spec.name.clone(),
            rows: spec.rows,
            cols: spec.cols,
            offset,
        });
        offset += (spec.rows * spec.cols * 4) as u64;
    }
    let header = Header {
        config: config.clone(),
        tensors,
    };
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CHECKPOINT_MAGIC.as_bytes())?;
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for spec in &specs {
        let m = weights.get(&spec.name)?;
        for &v in m.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Convenience: initialize seeded weights and save them in one step.
pub fn init_and_save(path: &Path, config: &ModelConfig, seed: u64) -> Result<WeightSet> {
    let weights = init_weights(config, seed)?;
    save_checkpoint(path, config, &weights)?;
    Ok(weights)
}

/// Reads the magic string, returning `BadMagic` on any other prefix.
pub(crate) fn read_magic<R: Read>(r: &mut R, expected: &'static str) -> Result<()> {
    let mut buf = vec![0u8; expected.len()];
    let mut got = 0;
    while got < buf.len() {
        let n = r.read(&mut buf[got..])?;
        if n == 0 {
            break;
        }
        got += n;
    }
    if &buf[..got] != expected.as_bytes() {
        return Err(CliError::BadMagic {
            expected,
            found: String::from_utf8_lossy(&buf[..got]).into_owned(),
        });
    }
    Ok(())
}

/// Reads bytes up to (not including) the first newline.
pub(crate) fn read_header_line<R: Read>(r: &mut R) -> Result<Vec<u8>> {
    let mut line = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        let n = r.read(&mut byte)?;
        if n == 0 {
            return Err(CliError::MalformedHeader(
                "file ended before the header's terminating newline".into(),
            ));
        }
        if byte[0] == b'\n' {
            return Ok(line);
        }
        line.push(byte[0]);
        if line.len() > MAX_HEADER_BYTES {
            return Err(CliError::MalformedHeader("header exceeds size limit".into()));
        }
    }
}

/// Loads and fully validates a checkpoint.
pub fn load_checkpoint(path: &Path) -> Result<(ModelConfig, WeightSet)> {
    let mut r = BufReader::new(File::open(path)?);
    read_magic(&mut r, CHECKPOINT_MAGIC)?;
    let line = read_header_line(&mut r)?;
    let header: Header = serde_json::from_slice(&line)?;
    header.config.validate()?;

    // The header manifest must be exactly the one the config implies.
    let specs = manifest(&header.config);
    if header.tensors.len() != specs.len() {
        return Err(CliError::MalformedHeader(format!(
            "manifest lists {} tensors, config implies {}",
            header.tensors.len(),
            specs.len()
        )));
    }
    let mut offset = 0u64;
    for (entry, spec) in header.tensors.iter().zip(&specs) {
        if entry.name != spec.name {
            return Err(CliError::MalformedHeader(format!(
                "manifest entry {:?} out of order (expected {:?})",
                entry.name, spec.name
            )));
        }
        if entry.rows != spec.rows || entry.cols != spec.cols {
            return Err(CliError::ShapeMismatch {
                tensor: entry.name.clone(),
                expected_rows: spec.rows,
                expected_cols: spec.cols,
                found_rows: entry.rows,
                found_cols: entry.cols,
            });
        }
        if entry.offset != offset {
            return Err(CliError::MalformedHeader(format!(
                "tensor {:?} has offset {}, expected {}",
                entry.name, entry.offset, offset
            )));
        }
        offset += (entry.rows * entry.cols * 4) as u64;
    }

    let mut weights = WeightSet::new();
    for spec in &specs {
        let n_bytes = spec.rows * spec.cols * 4;
        let mut buf = vec![0u8; n_bytes];
        let mut got = 0;
        while got < n_bytes {
            let n = r.read(&mut buf[got..])?;
            if n == 0 {
                return Err(CliError::Truncated {
                    name: spec.name.clone(),
                    needed_bytes: n_bytes,
                    got_bytes: got,
                });
            }
            got += n;
        }
        let data: Vec<f32> = buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        weights.insert(spec.name.clone(), Matrix::new(spec.rows, spec.cols, data)?);
    }
    // Reject trailing bytes: the manifest accounts for the whole payload.
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(CliError::MalformedHeader(
            "trailing bytes after the last tensor".into(),
        ));
    }
    weights.validate(&header.config)?;
    Ok((header.config, weights))
}

/// FNV-1a digest of a file, for quick identity checks in summaries.
pub fn file_digest(path: &Path) -> Result<u64> {
    let mut r = BufReader::new(File::open(path)?);
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    let mut buf = [0u8; 8192];
    loop {
        let n = r.read(&mut buf)?;
        if n == 0 {
            return Ok(hash);
        }
        for &b in &buf[..n] {
            hash ^= b as u64;
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
}
