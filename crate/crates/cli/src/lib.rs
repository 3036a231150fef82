//! File formats, run orchestration, and subcommand implementations behind
//! the `augmem` binary. Kept as a library so integration tests can drive
//! the same code paths the binary uses.

pub mod checkpoint;
pub mod commands;
pub mod error;
pub mod featfile;
pub mod runconfig;
pub mod runlog;
pub mod timer;
pub mod vocab;

pub use error::{CliError, Result};
