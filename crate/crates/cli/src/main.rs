//! Command-line front end for the balanced-allocation simulator: gap and
//! efficiency experiments, live verification of the sampling and
//! allocation conditions, potential instrumentation, trace recording and
//! folding, all exported as CSV or JSON.
//!
//! Exit codes: 0 success, 1 verification failure (strict `verify`, or a
//! failed `counterexample` bound), 2 invalid configuration or I/O error.
//! `BALLSIM_THREADS` caps the worker pool used for parallel repetitions;
//! results are byte-identical for a given seed regardless of its value.

mod commands;
mod output;

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use ballsim::{BiasKind, ProcessConfig, ProcessKind, VerifyMode};

/// Seeded simulators, verifiers, and experiment exporters for
/// balanced-allocation processes (balls into bins, one sample batch per
/// round). Bin indices in every output are 0-based.
#[derive(Parser)]
#[command(name = "ballsim", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Distribution of the final load gap across seeded repetitions
    Gap(GapArgs),
    /// Cumulative throughput and sample-efficiency series of one run
    Efficiency(EfficiencyArgs),
    /// Run a process with per-round verification of the sampling and
    /// allocation conditions
    Verify(VerifyArgs),
    /// Exact one-step check of the configuration that pushes the overload
    /// potential up in expectation
    Counterexample(CounterexampleArgs),
    /// Potential and good-event instrumentation of one run
    Potential(PotentialArgs),
    /// Fold an atomic memory trace into multi-ball filling rounds and
    /// audit them
    FoldMemory(FoldMemoryArgs),
    /// Record a run as a newline-delimited JSON trace
    Trace(TraceArgs),
}

/// Process selection shared by the run-driving subcommands.
#[derive(Args)]
struct ProcessArgs {
    /// Allocation process: one_choice, two_choice, d_choice,
    /// one_plus_beta, quantile, packing, tight_packing, memory, or
    /// biased_packing
    #[arg(long)]
    process: String,

    /// Number of bins (n)
    #[arg(long)]
    bins: usize,

    /// Samples per round for d_choice (default 2)
    #[arg(long)]
    d: Option<u32>,

    /// Probability of a two-sample round for one_plus_beta (in (0, 1])
    #[arg(long)]
    beta: Option<f64>,

    /// Quantile fraction for quantile (in (0, 1); default 0.5)
    #[arg(long)]
    quantile: Option<f64>,

    /// Lower-bound bias parameter for biased_packing: every bin keeps
    /// probability at least 1/(a·n)
    #[arg(long = "bias-a")]
    bias_a: Option<u64>,

    /// Upper-bound bias parameter for biased_packing: no bin exceeds
    /// probability b/n
    #[arg(long = "bias-b")]
    bias_b: Option<u64>,

    /// Which extreme biased vector biased_packing samples from: mass piled
    /// on the heaviest ranks (max) or the lightest ranks (min)
    #[arg(long, value_enum, default_value_t = BiasChoice::Max)]
    bias: BiasChoice,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BiasChoice {
    Max,
    Min,
}

impl ProcessArgs {
    fn to_config(&self) -> Result<ProcessConfig, CliError> {
        let kind = match self.process.as_str() {
            "one_choice" => ProcessKind::OneChoice,
            "two_choice" => {
                if let Some(d) = self.d {
                    if d != 2 {
                        return Err(CliError::config(
                            "two_choice always uses d = 2; use --process d_choice to set --d",
                        ));
                    }
                }
                ProcessKind::DChoice { d: 2 }
            }
            "d_choice" => ProcessKind::DChoice { d: self.d.unwrap_or(2) },
            "one_plus_beta" => {
                let beta = self.beta.ok_or_else(|| {
                    CliError::config("one_plus_beta requires --beta")
                })?;
                ProcessKind::OnePlusBeta { beta }
            }
            "quantile" => ProcessKind::Quantile { delta: self.quantile.unwrap_or(0.5) },
            "packing" => ProcessKind::Packing,
            "tight_packing" => ProcessKind::TightPacking,
            "memory" => ProcessKind::Memory,
            "biased_packing" => {
                let a = self.bias_a.ok_or_else(|| {
                    CliError::config("biased_packing requires --bias-a")
                })?;
                let b = self.bias_b.ok_or_else(|| {
                    CliError::config("biased_packing requires --bias-b")
                })?;
                let bias = match self.bias {
                    BiasChoice::Max => BiasKind::MaxBias,
                    BiasChoice::Min => BiasKind::MinBias,
                };
                ProcessKind::BiasedPacking { a, b, bias }
            }
            other => {
                return Err(CliError::config(format!(
                    "unknown process {other:?} (known: one_choice, two_choice, d_choice, \
                     one_plus_beta, quantile, packing, tight_packing, memory, biased_packing)"
                )));
            }
        };
        let config = ProcessConfig { bins: self.bins, kind };
        ballsim::make_process(&config)?; // surface parameter errors up front
        Ok(config)
    }
}

/// Round-count selection: exactly one of the two spellings.
#[derive(Args)]
#[group(required = true, multiple = false)]
struct HorizonArgs {
    /// Number of rounds m (each round draws one sample batch; filling
    /// rounds may place several balls)
    #[arg(long)]
    rounds: Option<u64>,

    /// Run m = k·n rounds for k balls per bin of one-ball rounds; a
    /// filling process can end with more than k·n balls in total (both the
    /// round count and the final ball count are recorded)
    #[arg(long = "balls-per-bin")]
    balls_per_bin: Option<u64>,
}

impl HorizonArgs {
    fn rounds(&self, bins: usize) -> Result<u64, CliError> {
        let rounds = match (self.rounds, self.balls_per_bin) {
            (Some(m), None) => m,
            (None, Some(k)) => k.checked_mul(bins as u64).ok_or_else(|| {
                CliError::config("--balls-per-bin times --bins overflows the round counter")
            })?,
            _ => unreachable!("clap enforces exactly one horizon flag"),
        };
        if rounds == 0 {
            return Err(CliError::config("the run needs at least 1 round"));
        }
        Ok(rounds)
    }
}

/// Output destination and format for the data-emitting subcommands.
#[derive(Args)]
struct OutputArgs {
    /// Write to this file instead of standard output
    #[arg(long)]
    out: Option<PathBuf>,

    /// Output format
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct GapArgs {
    #[command(flatten)]
    process: ProcessArgs,
    #[command(flatten)]
    horizon: HorizonArgs,
    /// Independent repetitions (repetition r uses RNG stream r of the seed)
    #[arg(long, default_value_t = 1)]
    reps: u32,
    /// Base RNG seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct EfficiencyArgs {
    #[command(flatten)]
    process: ProcessArgs,
    #[command(flatten)]
    horizon: HorizonArgs,
    /// Emit a series point every this many rounds (default: rounds/100,
    /// at least 1); the final round is always included
    #[arg(long)]
    stride: Option<u64>,
    /// Base RNG seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// RNG stream within the seed
    #[arg(long, default_value_t = 0)]
    rep: u64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    process: ProcessArgs,
    #[command(flatten)]
    horizon: HorizonArgs,
    /// strict: stop at the first violation and exit 1; audit: run to the
    /// end counting every violation and exit 0
    #[arg(long, value_enum, default_value_t = ModeChoice::Strict)]
    mode: ModeChoice,
    /// Base RNG seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// RNG stream within the seed
    #[arg(long, default_value_t = 0)]
    rep: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeChoice {
    Strict,
    Audit,
}

impl From<ModeChoice> for VerifyMode {
    fn from(mode: ModeChoice) -> Self {
        match mode {
            ModeChoice::Strict => VerifyMode::Strict,
            ModeChoice::Audit => VerifyMode::Audit,
        }
    }
}

#[derive(Args)]
struct CounterexampleArgs {
    /// Number of bins (must be a perfect square, at least 4)
    #[arg(long)]
    bins: usize,
    /// Positive smoothing parameter of the exponential overload potential
    /// Σ e^(α·y) over bins at or above the average
    #[arg(long)]
    alpha: f64,
}

#[derive(Args)]
struct PotentialArgs {
    #[command(flatten)]
    process: ProcessArgs,
    #[command(flatten)]
    horizon: HorizonArgs,
    /// Smoothing parameter for the exponential overload potential
    #[arg(long)]
    alpha: f64,
    /// Snapshot every this many rounds (default: rounds/100, at least 1);
    /// round 0 and the final round are always included
    #[arg(long)]
    stride: Option<u64>,
    /// Good-event window length in rounds (default: the bin count); each
    /// window [t0, t0+window] counts its good states
    #[arg(long)]
    window: Option<u64>,
    /// Base RNG seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// RNG stream within the seed
    #[arg(long, default_value_t = 0)]
    rep: u64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct FoldMemoryArgs {
    /// Atomic memory trace to read (newline-delimited JSON with a header
    /// line, as written by the trace subcommand)
    #[arg(long = "in")]
    input: PathBuf,
    /// Write the folded rounds here (default: standard output)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TraceArgs {
    #[command(flatten)]
    process: ProcessArgs,
    #[command(flatten)]
    horizon: HorizonArgs,
    /// Base RNG seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// RNG stream within the seed
    #[arg(long, default_value_t = 0)]
    rep: u64,
    /// Write the trace here (default: standard output)
    #[arg(long)]
    out: Option<PathBuf>,
}

/// One-line failure carried to `main` and printed to stderr; always exit
/// code 2 (verification verdicts use the command return value instead).
#[derive(Debug)]
pub struct CliError(String);

impl CliError {
    fn config(msg: impl Into<String>) -> Self {
        CliError(msg.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<ballsim::ConfigError> for CliError {
    fn from(err: ballsim::ConfigError) -> Self {
        CliError(err.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError(err.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(err: csv::Error) -> Self {
        CliError(err.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(err: serde_json::Error) -> Self {
        CliError(err.to_string())
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("BALLSIM_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .map_err(|_| format!("BALLSIM_THREADS must be a positive integer, got {raw:?}"))?;
    if threads == 0 {
        return Err("BALLSIM_THREADS must be at least 1".into());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|err| format!("failed to size the worker pool: {err}"))
}

fn run(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Command::Gap(args) => commands::gap(&args),
        Command::Efficiency(args) => commands::efficiency(&args),
        Command::Verify(args) => commands::verify(&args),
        Command::Counterexample(args) => commands::counterexample(&args),
        Command::Potential(args) => commands::potential(&args),
        Command::FoldMemory(args) => commands::fold_memory(&args),
        Command::Trace(args) => commands::trace(&args),
    }
}

fn main() -> ExitCode {
    if let Err(msg) = configure_threads() {
        eprintln!("ballsim: {msg}");
        return ExitCode::from(2);
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("ballsim: {err}");
            ExitCode::from(2)
        }
    }
}
