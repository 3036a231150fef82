//! Token vocabulary: one UTF-8 token per line, line number = id.
//!
//! The first three lines are reserved for `<pad>`, `<bos>`, `<eos>` so ids
//! line up with the model's sentinel constants. When no file is supplied,
//! a synthetic vocabulary (`tok3`, `tok4`, ...) keeps every id printable.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use augmem_core::model::RESERVED_TOKENS;

use crate::error::{CliError, Result};

const RESERVED: [&str; RESERVED_TOKENS] = ["<pad>", "<bos>", "<eos>"];

#[derive(Debug, Clone)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < RESERVED_TOKENS {
            return Err(CliError::Vocab(format!(
                "need at least {RESERVED_TOKENS} tokens, found {}",
                tokens.len()
            )));
        }
        for (id, want) in RESERVED.iter().enumerate() {
            if tokens[id] != *want {
                return Err(CliError::Vocab(format!(
                    "line {id} must be {want:?}, found {:?}",
                    tokens[id]
                )));
            }
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (id, tok) in tokens.iter().enumerate() {
            if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                return Err(CliError::Vocab(format!(
                    "token at line {id} is empty or contains whitespace"
                )));
            }
            if index.insert(tok.clone(), id).is_some() {
                return Err(CliError::Vocab(format!("duplicate token {tok:?} at line {id}")));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_tokens(text.lines().map(str::to_string).collect())
    }

    /// Synthetic vocabulary covering exactly `vocab_size` ids.
    pub fn synthetic(vocab_size: usize) -> Result<Self> {
        let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        for id in RESERVED_TOKENS..vocab_size {
            tokens.push(format!("tok{id}"));
        }
        Self::from_tokens(tokens)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = String::new();
        for tok in &self.tokens {
            text.push_str(tok);
            text.push('\n');
        }
        fs::write(path, text)?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Surface form for `id`; out-of-range ids get a printable placeholder.
    pub fn surface(&self, id: usize) -> String {
        self.tokens
            .get(id)
            .cloned()
            .unwrap_or_else(|| format!("<oov{id}>"))
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use augmem_core::model::{BOS_ID, EOS_ID, PAD_ID};
    use std::fs;
    use tempfile::tempdir;

    #[test]
    fn synthetic_round_trips_and_is_bijective() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("v.txt");
        let v = Vocab::synthetic(10).unwrap();
        v.save(&path).unwrap();
        let loaded = Vocab::load(&path).unwrap();
        assert_eq!(loaded.len(), 10);
        for id in 0..10 {
            assert_eq!(loaded.id(&loaded.surface(id)), Some(id));
        }
        assert_eq!(loaded.surface(PAD_ID), "<pad>");
        assert_eq!(loaded.surface(BOS_ID), "<bos>");
        assert_eq!(loaded.surface(EOS_ID), "<eos>");
    }

    #[test]
    fn missing_reserved_tokens_are_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("v.txt");
        fs::write(&path, "<pad>\n<eos>\n<bos>\nx\n").unwrap();
        assert!(matches!(Vocab::load(&path), Err(CliError::Vocab(_))));
    }

    #[test]
    fn duplicates_are_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("v.txt");
        fs::write(&path, "<pad>\n<bos>\n<eos>\na\na\n").unwrap();
        assert!(matches!(Vocab::load(&path), Err(CliError::Vocab(_))));
    }

    #[test]
    fn out_of_range_id_gets_placeholder() {
        let v = Vocab::synthetic(5).unwrap();
        assert_eq!(v.surface(99), "<oov99>");
    }
}
