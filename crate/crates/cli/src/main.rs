//! repcap: capacity estimation for vector-embedding representations.
//!
//! Subcommands cover the 2D toy study, the full estimation pipeline over an
//! embedding file or a synthetic teacher, FAR sweeps from cached statistics,
//! and verification-ROC evaluation of a student against its teacher.

mod cmd;
mod config;
mod report;

use clap::{Parser, Subcommand};

/// Exit codes: 0 success, 2 usage or validation, 3 numeric failure.
pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "repcap", version, about = "Embedding capacity estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
#[allow(clippy::large_enum_variant)] // parsed once, immediately consumed
enum Command {
    /// Two-dimensional toy constellation with a convex-hull baseline.
    Toy(cmd::toy::ToyArgs),
    /// Full capacity pipeline: projector, student, statistics, capacity.
    Pipeline(cmd::pipeline::PipelineArgs),
    /// FAR sweep from the statistics cached by `pipeline`.
    Sweep(cmd::sweep::SweepArgs),
    /// Teacher-vs-student verification ROC and score correlation.
    Eval(cmd::eval::EvalArgs),
}

fn exit_code_for(err: &report::CmdError) -> i32 {
    match err.source {
        repcap_core::Error::NotPositiveDefinite { .. } => EXIT_NUMERIC,
        _ => EXIT_USAGE,
    }
}

fn main() {
    // REPCAP_THREADS caps intra-stage parallelism; results do not depend on
    // the thread count (fixed-order reductions), only the wall time does.
    if let Ok(v) = std::env::var("REPCAP_THREADS") {
        if let Ok(n) = v.trim().parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
            }
        }
    }

    let argv = match config::merge_config_file(std::env::args().collect()) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("error: {msg}");
            std::process::exit(EXIT_USAGE);
        }
    };
    let cli = Cli::parse_from(argv);
    let result = match cli.command {
        Command::Toy(args) => cmd::toy::run(args),
        Command::Pipeline(args) => cmd::pipeline::run(args),
        Command::Sweep(args) => cmd::sweep::run(args),
        Command::Eval(args) => cmd::eval::run(args),
    };
    match result {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(exit_code_for(&e));
        }
    }
}
