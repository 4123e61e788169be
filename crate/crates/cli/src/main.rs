use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gravvortex_cli::config::Command;
use gravvortex_cli::run::{EXIT_CONFIG, EXIT_OK};
use gravvortex_cli::{execute, Overrides, RunConfig};

/// Vortices and gravitating vortices on the torus and the sphere.
///
/// Exit codes: 0 success, 1 I/O failure, 2 invalid configuration,
/// 3 no convergence, 4 continuation stalled, 5 audit failed.
#[derive(Parser, Debug)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Solver tolerance (overrides the config).
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Seed for sampled audit directions (overrides the config).
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(..=i64::MAX as u64))]
    seed: Option<u64>,
    /// Print per-step progress to stderr.
    #[arg(long, global = true)]
    verbose: bool,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Sub {
    /// GIT class, Hilbert–Mumford exponent and limit weight of a divisor.
    Classify,
    /// Solve the configured equation and audit the result.
    Solve,
    /// Compare the Futaki invariant quadrature with the closed form.
    Futaki,
    /// Independent solves over a list of couplings.
    Sweep,
    /// Audit the fields written by an earlier solve.
    Audit,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Some(path) = cli.config.as_ref() else {
        eprintln!("error: --config is required");
        return ExitCode::from(EXIT_CONFIG as u8);
    };
    let mut config = match RunConfig::load(path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    config.command = match cli.command {
        Sub::Classify => Command::Classify,
        Sub::Solve => Command::Solve,
        Sub::Futaki => Command::Futaki,
        Sub::Sweep => Command::Sweep,
        Sub::Audit => Command::Audit,
    };
    let overrides = Overrides { out: cli.out, tol: cli.tol, seed: cli.seed, verbose: cli.verbose };
    let outcome = execute(config, &overrides);
    print!("{}", outcome.report);
    if outcome.code != EXIT_OK {
        eprintln!("exit code {}", outcome.code);
    }
    ExitCode::from(outcome.code as u8)
}
