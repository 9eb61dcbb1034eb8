use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use forcing_stages::generic::DEFAULT_BUDGET;
use forcing_stages::random::{DEFAULT_N_MAX, DEFAULT_SEED, DEFAULT_SUP_RADIUS};
use serde::Serialize;

mod run;

/// Runs the stage constructions to a bound, verifies or certifies them, and
/// writes JSON artifacts.
///
/// Exit status: 0 when every check passes, 1 when a certificate or polarity
/// check fails, 2 on configuration or I/O errors, 3 when a bounded search is
/// exhausted.
#[derive(Parser, Debug)]
#[command(name = "forcing-stages", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandName {
    BuildGeneric,
    BuildProduct,
    BuildRandom,
    Verify,
    Certify,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Perfect tree of Cohen conditions diagonalizing against the registry.
    BuildGeneric(RunArgs),
    /// The product construction over a notion of forcing.
    BuildProduct(RunArgs),
    /// Tree avoiding joins with a random set above the target stream.
    BuildRandom(RunArgs),
    /// Rebuild a generic or product construction and check every pair.
    Verify(RunArgs),
    /// Rebuild the random construction and certify its test measures.
    Certify(RunArgs),
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Notion {
    Cohen,
    Ks,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Construction {
    Generic,
    Product,
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    /// Forcing notion of the product construction.
    #[arg(long, value_enum, default_value = "cohen")]
    pub notion: Notion,
    /// Which construction `verify` rebuilds.
    #[arg(long, value_enum, default_value = "generic")]
    pub construction: Construction,
    /// Number of stages [default: 8, or 7 for build-random and certify].
    #[arg(long)]
    pub stages: Option<u64>,
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    pub oracle_budget: u64,
    /// Budget for rechecking negative verdicts [default: twice the oracle budget].
    #[arg(long)]
    pub recheck_budget: Option<u64>,
    #[arg(long, default_value_t = DEFAULT_SUP_RADIUS)]
    pub sup_radius: usize,
    #[arg(long, default_value_t = DEFAULT_N_MAX)]
    pub n_max: u64,
    /// Seed of the target stream.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// `default`, `divergent`, `two-phase[:DELAY]`, or a registry JSON file.
    #[arg(long, default_value = "default")]
    pub registry: String,
    /// Artifact path; standard output when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, args) = match cli.command {
        Command::BuildGeneric(a) => (CommandName::BuildGeneric, a),
        Command::BuildProduct(a) => (CommandName::BuildProduct, a),
        Command::BuildRandom(a) => (CommandName::BuildRandom, a),
        Command::Verify(a) => (CommandName::Verify, a),
        Command::Certify(a) => (CommandName::Certify, a),
    };
    match run::run(name, &args) {
        Ok(outcome) => {
            eprintln!("{}", outcome.summary);
            ExitCode::from(if outcome.passed { 0 } else { 1 })
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
