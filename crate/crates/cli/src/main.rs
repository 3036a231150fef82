//! The `augmem` binary: streaming simultaneous speech-translation
//! inference at the command line.
//!
//! Exit codes: 0 success, 1 runtime error, 2 usage/config error. Set
//! `AUGMEM_LOG=info` (or `debug`) for progress logging on stderr.

use clap::{Parser, Subcommand};

use augmem_cli::commands::bench::{cmd_bench, BenchArgs};
use augmem_cli::commands::eval::{cmd_eval, EvalArgs};
use augmem_cli::commands::init::{cmd_init, InitArgs};
use augmem_cli::commands::simulate::{cmd_simulate, SimulateArgs};
use augmem_cli::commands::sweep::{cmd_sweep, SweepArgs};

#[derive(Parser)]
#[command(
    name = "augmem",
    version,
    about = "Streaming speech-translation inference with a bounded-memory encoder"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a seeded checkpoint (and optionally a vocabulary file)
    Init(InitArgs),
    /// Run one stream through the simultaneous pipeline
    Simulate(SimulateArgs),
    /// Run a grid of configurations and emit one CSV row per cell
    Sweep(SweepArgs),
    /// Recompute metrics from a stored run log
    Eval(EvalArgs),
    /// Profile encoder variants over a long stream
    Bench(BenchArgs),
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("AUGMEM_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Init(args) => cmd_init(args),
        Cmd::Simulate(args) => cmd_simulate(args),
        Cmd::Sweep(args) => cmd_sweep(args),
        Cmd::Eval(args) => cmd_eval(args),
        Cmd::Bench(args) => cmd_bench(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
