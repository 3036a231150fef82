//! Flag parsing helpers: presets, list/segment/variant grammars, and
//! config overrides. Everything here reports `Usage` (exit code 2) because
//! the user can fix these on the command line.

use std::fs;
use std::path::Path;

use augmem_core::features::SynthKind;
use augmem_core::session::EncoderVariant;
use augmem_core::{ModelConfig, SegmentSpec};

use crate::error::{CliError, Result};

/// Built-in configuration named on the command line.
pub fn preset(name: &str) -> Result<ModelConfig> {
    match name {
        "full" => Ok(ModelConfig::default()),
        "desk" => Ok(ModelConfig::desk_scale()),
        other => Err(CliError::Usage(format!(
            "unknown preset {other:?} (expected \"full\" or \"desk\")"
        ))),
    }
}

/// Loads a config from a JSON file; unspecified fields take defaults.
pub fn load_config(path: &Path) -> Result<ModelConfig> {
    let text = fs::read_to_string(path)?;
    let config: ModelConfig =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config file: {e}")))?;
    Ok(config)
}

/// `L,C,R` triple at encoder-state rate.
pub fn parse_segment(s: &str) -> Result<SegmentSpec> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(CliError::Usage(format!(
            "segment must be L,C,R (three comma-separated counts), got {s:?}"
        )));
    }
    let nums: Vec<usize> = parts
        .iter()
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| CliError::Usage(format!("segment component {p:?} is not a count")))
        })
        .collect::<Result<_>>()?;
    Ok(SegmentSpec::new(nums[0], nums[1], nums[2]))
}

/// Count that also accepts `inf` (unbounded).
pub fn parse_count_or_inf(s: &str) -> Result<usize> {
    let t = s.trim();
    if t.eq_ignore_ascii_case("inf") {
        return Ok(usize::MAX);
    }
    t.parse::<usize>()
        .map_err(|_| CliError::Usage(format!("expected a count or \"inf\", got {s:?}")))
}

/// Renders a count, spelling `usize::MAX` as `inf`.
pub fn count_label(n: usize) -> String {
    if n == usize::MAX {
        "inf".to_string()
    } else {
        n.to_string()
    }
}

/// `kind:frames[:seed]` where kind is constant|sine|noise.
pub fn parse_synth(spec: &str) -> Result<(SynthKind, usize, u64)> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() < 2 || parts.len() > 3 {
        return Err(CliError::Usage(format!(
            "synth spec must be kind:frames[:seed], got {spec:?}"
        )));
    }
    let kind = match parts[0] {
        "constant" | "const" => SynthKind::Constant,
        "sine" => SynthKind::Sine,
        "noise" => SynthKind::SeededNoise,
        other => {
            return Err(CliError::Usage(format!(
                "unknown synth kind {other:?} (expected constant|sine|noise)"
            )))
        }
    };
    let frames = parts[1]
        .parse::<usize>()
        .map_err(|_| CliError::Usage(format!("synth frame count {:?} is not a count", parts[1])))?;
    let seed = if parts.len() == 3 {
        parts[2]
            .parse::<u64>()
            .map_err(|_| CliError::Usage(format!("synth seed {:?} is not an integer", parts[2])))?
    } else {
        0
    };
    Ok((kind, frames, seed))
}

/// `augmem`, `unidir:CHUNK` (alias `unidirectional:CHUNK`), or `full`.
pub fn parse_variant(s: &str) -> Result<EncoderVariant> {
    let t = s.trim();
    if t == "augmem" {
        return Ok(EncoderVariant::Augmem);
    }
    if t == "full" {
        return Ok(EncoderVariant::Full);
    }
    if let Some(rest) = t.strip_prefix("unidir:").or_else(|| t.strip_prefix("unidirectional:")) {
        let chunk = rest.parse::<usize>().map_err(|_| {
            CliError::Usage(format!("recompute chunk {rest:?} is not a count"))
        })?;
        if chunk == 0 {
            return Err(CliError::Usage("recompute chunk must be >= 1".into()));
        }
        return Ok(EncoderVariant::Unidirectional { recompute_chunk: chunk });
    }
    Err(CliError::Usage(format!(
        "unknown variant {t:?} (expected augmem, unidir:CHUNK, or full)"
    )))
}

/// Stable label for a variant, used in CSV and logs.
pub fn variant_label(v: EncoderVariant) -> String {
    match v {
        EncoderVariant::Augmem => "augmem".to_string(),
        EncoderVariant::Unidirectional { recompute_chunk } => format!("unidir:{recompute_chunk}"),
        EncoderVariant::Full => "full".to_string(),
    }
}

/// Comma-separated list with a per-item parser; empty lists are a usage
/// error (an empty sweep axis would silence the whole grid).
pub fn parse_list<T>(s: &str, what: &str, parse: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    let items: Vec<&str> = s.split(',').map(str::trim).filter(|p| !p.is_empty()).collect();
    if items.is_empty() {
        return Err(CliError::Usage(format!("{what} list is empty")));
    }
    items.into_iter().map(|i| parse(i)).collect()
}

/// Semicolon-separated list of `L,C,R` triples.
pub fn parse_segment_list(s: &str) -> Result<Vec<SegmentSpec>> {
    let items: Vec<&str> = s.split(';').map(str::trim).filter(|p| !p.is_empty()).collect();
    if items.is_empty() {
        return Err(CliError::Usage("segment list is empty".into()));
    }
    items.into_iter().map(parse_segment).collect()
}

/// Optional command-line overrides applied on top of a base config.
#[derive(Debug, Default, Clone)]
pub struct ModelOverrides {
    pub segment: Option<SegmentSpec>,
    pub memory: Option<usize>,
    pub chunk: Option<usize>,
    pub k: Option<usize>,
}

/// Applies overrides and re-validates; an invalid result is a usage error.
pub fn apply_overrides(config: &mut ModelConfig, o: &ModelOverrides) -> Result<()> {
    if let Some(seg) = o.segment {
        config.segment = seg;
    }
    if let Some(n) = o.memory {
        config.max_memory = n;
    }
    if let Some(w) = o.chunk {
        config.predecision_chunk = w;
    }
    if let Some(k) = o.k {
        config.waitk_k = k;
    }
    config
        .validate()
        .map_err(|e| CliError::Usage(format!("invalid configuration: {e}")))
}
