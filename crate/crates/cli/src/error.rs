//! Error type for the command-line layer.
//!
//! File-format problems get distinct kinds so tests (and users) can tell a
//! wrong file from a corrupted one from a short one. `Usage` marks errors
//! the user can fix on the command line and maps to exit code 2; everything
//! else exits 1.

use std::fmt;

/// Anything a command can fail with.
#[derive(Debug)]
pub enum CliError {
    Io(std::io::Error),
    Core(augmem_core::Error),
    /// The file does not start with the expected magic string.
    BadMagic {
        expected: &'static str,
        found: String,
    },
    /// The JSON header is missing, unterminated, or not valid JSON.
    MalformedHeader(String),
    /// A tensor's header shape disagrees with the shape the config implies.
    ShapeMismatch {
        tensor: String,
        expected_rows: usize,
        expected_cols: usize,
        found_rows: usize,
        found_cols: usize,
    },
    /// The payload ended before the named item was complete.
    Truncated {
        name: String,
        needed_bytes: usize,
        got_bytes: usize,
    },
    /// A vocabulary file violates its format contract.
    Vocab(String),
    /// Input data is internally inconsistent (e.g. hyp/ref sentence counts).
    Data(String),
    /// Bad flags or an invalid requested configuration; exit code 2.
    Usage(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Io(e) => write!(f, "io: {e}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::BadMagic { expected, found } => {
                write!(f, "bad magic: expected {expected:?}, found {found:?}")
            }
            CliError::MalformedHeader(msg) => write!(f, "malformed header: {msg}"),
            CliError::ShapeMismatch {
                tensor,
                expected_rows,
                expected_cols,
                found_rows,
                found_cols,
            } => write!(
                f,
                "shape mismatch for {tensor}: header says {found_rows}x{found_cols}, \
                 config implies {expected_rows}x{expected_cols}"
            ),
            CliError::Truncated {
                name,
                needed_bytes,
                got_bytes,
            } => write!(
                f,
                "truncated while reading {name}: needed {needed_bytes} bytes, got {got_bytes}"
            ),
            CliError::Vocab(msg) => write!(f, "vocab: {msg}"),
            CliError::Data(msg) => write!(f, "data: {msg}"),
            CliError::Usage(msg) => write!(f, "usage: {msg}"),
        }
    }
}

impl std::error::Error for CliError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            CliError::Io(e) => Some(e),
            CliError::Core(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<augmem_core::Error> for CliError {
    fn from(e: augmem_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::MalformedHeader(e.to_string())
    }
}
