//! `lossycomp`: rate-distortion computations for lossy function computation
//! with decoder side information.
//!
//! Exit codes: 0 success, 2 validation error, 3 numerical failure, 4 check
//! failure. Errors are also printed to stderr as one JSON object
//! `{"error": CODE, "kind": ..., "message": ...}`.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lossycomp::ErrorKind;
use serde_json::json;

#[derive(Debug, Parser)]
#[command(
    name = "lossycomp",
    version,
    about = "Rate-distortion for lossy function computation with side information"
)]
struct Cli {
    /// Worker threads for restarts, sweeps and simulation.
    #[arg(long, global = true, env = "LOSSYCOMP_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Clone)]
#[group(required = true, multiple = false)]
pub struct SourceArgs {
    /// Problem specification (JSON).
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Built-in problem: card-game, shannon-binary or wyner-ziv-identity.
    #[arg(long)]
    builtin: Option<String>,
}

#[derive(Debug, Args, Clone)]
pub struct SolverArgs {
    /// Stop when one step lowers the Lagrangian by less than this (bits).
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Random restarts per Lagrangian solve.
    #[arg(long)]
    restarts: Option<usize>,
    /// Seed for every random choice; defaults to a fixed constant.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Structured,
}

#[derive(Debug, Args, Clone)]
pub struct OutputArgs {
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Alphabet {
    /// All candidate recoveries, with the distortion penalty.
    Recoveries,
    /// Zero-distortion family of the given measure.
    GammaD,
    /// Zero-distortion family of the thresholded measure (needs --epsilon).
    GammaEps,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a specification and print its sizes and zero-rate distortion.
    Validate {
        #[command(flatten)]
        source: SourceArgs,
    },
    /// One point of the rate-distortion function.
    Solve {
        #[command(flatten)]
        source: SourceArgs,
        /// Target distortion.
        #[arg(long, conflicts_with = "lambda")]
        distortion: Option<f64>,
        /// Distortion multiplier (bits per unit distortion).
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long, value_enum, default_value = "recoveries")]
        alphabet: Alphabet,
        #[arg(long)]
        epsilon: Option<f64>,
        /// Report the channel over multi-hyperedges instead of recoveries.
        #[arg(long)]
        lift: bool,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Rate-distortion curve from a sweep of multipliers.
    Curve {
        #[command(flatten)]
        source: SourceArgs,
        /// MIN:MAX:N, or MIN:MAX:N:log for geometric spacing.
        #[arg(long, conflicts_with = "points", required_unless_present = "points")]
        lambda_grid: Option<String>,
        /// Number of points on an automatic multiplier grid.
        #[arg(long)]
        points: Option<usize>,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// List the zero-distortion family.
    Gamma {
        #[command(flatten)]
        source: SourceArgs,
        /// Use the thresholded measure 1{d > epsilon}.
        #[arg(long)]
        epsilon: Option<f64>,
        /// Keep only members not contained in another member.
        #[arg(long)]
        maximal: bool,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Compare a solver point with the brute-force reference.
    Oracle {
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long, conflicts_with = "point", required_unless_present = "point")]
        distortion: Option<f64>,
        /// Structured output of a previous `solve`.
        #[arg(long)]
        point: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Monte-Carlo run of the scheme a channel describes.
    Simulate {
        #[command(flatten)]
        source: SourceArgs,
        /// Solve at this distortion and simulate the lifted optimal channel.
        #[arg(long, conflicts_with_all = ["point", "zero_distortion"])]
        distortion: Option<f64>,
        /// Simulate the zero-distortion family solution.
        #[arg(long, conflicts_with = "point")]
        zero_distortion: bool,
        /// Structured output of a previous `solve`.
        #[arg(long)]
        point: Option<PathBuf>,
        /// Lift a recovery channel read from --point before simulating.
        #[arg(long, requires = "point")]
        lift: bool,
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
        /// Per-sample CSV trace.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Worked examples with known answers.
    Example {
        #[command(subcommand)]
        example: Example,
    },
}

#[derive(Debug, Subcommand)]
enum Example {
    /// Solver against the closed form of the three-card game.
    CardGame {
        /// Exit with status 4 if any gap exceeds 1e-3 bits.
        #[arg(long)]
        check: bool,
        /// Distortion levels evenly spaced on [0, 1/6].
        #[arg(long, default_value_t = 9)]
        points: usize,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
}

/// Failures raised by the front end itself.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("unknown builtin {0:?}")]
    UnknownBuiltin(String),
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot parse {path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("check failed: {0}")]
    CheckFailed(String),
}

fn classify(err: &anyhow::Error) -> (&'static str, &'static str, u8) {
    if let Some(e) = err.downcast_ref::<lossycomp::Error>() {
        return match e.kind() {
            ErrorKind::Validation => (e.code(), "validation", 2),
            ErrorKind::Numerical => (e.code(), "numerical", 3),
        };
    }
    match err.downcast_ref::<CliError>() {
        Some(CliError::CheckFailed(_)) => ("CheckFailed", "check", 4),
        Some(CliError::Usage(_)) => ("UsageError", "validation", 2),
        Some(CliError::UnknownBuiltin(_)) => ("UnknownBuiltin", "validation", 2),
        Some(CliError::Io { .. }) => ("IoError", "validation", 2),
        Some(CliError::Parse { .. }) => ("ParseError", "validation", 2),
        None => ("IoError", "validation", 2),
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot start {n} threads: {e}")))?;
    }
    match cli.command {
        Command::Validate { source } => commands::validate(&source),
        Command::Solve {
            source,
            distortion,
            lambda,
            alphabet,
            epsilon,
            lift,
            solver,
            output,
        } => commands::solve(&source, distortion, lambda, alphabet, epsilon, lift, &solver, &output),
        Command::Curve {
            source,
            lambda_grid,
            points,
            solver,
            output,
        } => commands::curve(&source, lambda_grid.as_deref(), points, &solver, &output),
        Command::Gamma {
            source,
            epsilon,
            maximal,
            output,
        } => commands::gamma(&source, epsilon, maximal, &output),
        Command::Oracle {
            source,
            distortion,
            point,
            solver,
            output,
        } => commands::oracle(&source, distortion, point.as_deref(), &solver, &output),
        Command::Simulate {
            source,
            distortion,
            zero_distortion,
            point,
            lift,
            samples,
            trace,
            solver,
            output,
        } => commands::simulate(
            &source,
            commands::ChannelSource::pick(distortion, zero_distortion, point, lift)?,
            samples,
            trace.as_deref(),
            &solver,
            &output,
        ),
        Command::Example {
            example:
                Example::CardGame {
                    check,
                    points,
                    solver,
                    output,
                },
        } => commands::card_game(check, points, &solver, &output),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (code, kind, status) = classify(&err);
            let message = format!("{err:#}");
            eprintln!("{}", json!({ "error": code, "kind": kind, "message": message }));
            ExitCode::from(status)
        }
    }
}
