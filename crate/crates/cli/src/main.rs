//! Batch front end for the randomized Collatz toolkit.
//!
//! Five subcommands: `simulate` (replicated randomized runs with a JSON
//! analysis report), `classical` (deterministic 3x+1 iteration over
//! ranges), `stationary` (exact truncated-chain stationary vector),
//! `reach` (path certificates from state 1), and `excursions` (threshold
//! crossings with tail fits and per-step bound checks).
//!
//! Every command writes its outputs plus a `manifest.json` naming the
//! seeds, the resolved configuration, and a digest of each output file.
//! Identical command lines produce byte-identical outputs; wall-clock
//! timestamps exist only inside the manifest.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 usage error, 3 numerical
//! non-convergence, 4 internal verification failure.

mod classical;
mod excursions;
mod manifest;
mod reach;
mod simulate;
mod stationary;

use std::fmt;
use std::io;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{ArgGroup, Args, Parser, Subcommand};
use serde::Serialize;

use collatz_core::engine::{DEFAULT_BIT_CAP, DEFAULT_EPSILON, DEFAULT_THRESHOLD};
use collatz_core::stats::{DEFAULT_BURN_IN, DEFAULT_OCCUPATION_CUTOFF};
use collatz_core::{Error, OddInt, XiDistribution};

pub(crate) const JOBS_ENV: &str = "COLLATZ_JOBS";

#[derive(Parser)]
#[command(
    name = "collatz",
    version,
    about = "Simulation, exact analysis, and reachability certificates for the randomized Collatz chain"
)]
struct Cli {
    /// Worker threads (default: $COLLATZ_JOBS, else all cores). Results
    /// do not depend on this.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Directory receiving the output files and the run manifest.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run seeded randomized replicas and write an analysis report.
    Simulate(SimulateArgs),
    /// Iterate the deterministic 3x+1 map over one start or a range.
    Classical(ClassicalArgs),
    /// Solve the truncated chain for its stationary distribution.
    Stationary(StationaryArgs),
    /// Construct and verify a reachability certificate per odd target.
    Reach(ReachArgs),
    /// Track threshold excursions, fit their tails, check step bounds.
    Excursions(ExcursionsArgs),
}

#[derive(Args, Serialize)]
pub(crate) struct SimulateArgs {
    /// Initial odd state (any size).
    #[arg(long, default_value = "1")]
    pub x0: String,

    /// Steps per replica.
    #[arg(long, default_value_t = 1_000_000)]
    pub steps: u64,

    /// Noise law: preset (uniform1357, pm1, onethree, onethreefive) or
    /// inline JSON {"atoms":[{"value":1,"prob":"1/4"},...]}.
    #[arg(long, default_value = "uniform1357")]
    pub xi: String,

    /// Base seed; replica r draws from stream (seed, r).
    #[arg(long, default_value_t = 42)]
    pub seed: u64,

    #[arg(long, default_value_t = 4)]
    pub replicas: u64,

    /// Slack of the relaxed above-threshold step bound.
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub epsilon: f64,

    /// Excursion threshold on the ln scale.
    #[arg(long = "M", default_value_t = DEFAULT_THRESHOLD)]
    pub threshold_m: f64,

    /// Abort a replica once the state exceeds this many bits.
    #[arg(long, default_value_t = DEFAULT_BIT_CAP)]
    pub bit_cap: u64,

    /// Steps discarded before occupation counting.
    #[arg(long, default_value_t = DEFAULT_BURN_IN)]
    pub burn_in: u64,

    /// Largest odd state with its own occupation counter.
    #[arg(long, default_value_t = DEFAULT_OCCUPATION_CUTOFF)]
    pub cutoff: u64,

    /// Also write one trajectory CSV per replica.
    #[arg(long)]
    pub trajectory: bool,
}

#[derive(Args, Serialize)]
#[command(group(ArgGroup::new("start").required(true).args(["x0", "range"])))]
pub(crate) struct ClassicalArgs {
    /// Single odd start (any size).
    #[arg(long)]
    pub x0: Option<String>,

    /// Inclusive range a..b; every odd value in it becomes a start.
    #[arg(long)]
    pub range: Option<String>,

    /// Odd-step budget per start; exhausting it marks the row undecided.
    #[arg(long, default_value_t = 10_000)]
    pub max_steps: u64,

    #[arg(long, default_value_t = DEFAULT_BIT_CAP)]
    pub bit_cap: u64,
}

#[derive(Args, Serialize)]
pub(crate) struct StationaryArgs {
    #[arg(long, default_value = "uniform1357")]
    pub xi: String,

    /// Largest odd state in the truncated system.
    #[arg(long, default_value_t = DEFAULT_OCCUPATION_CUTOFF)]
    pub cutoff: u64,

    /// L1 convergence tolerance of the power iteration.
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,

    #[arg(long, default_value_t = 1_000_000)]
    pub max_iters: u64,

    /// Also export the transition table as sparse triplet CSV.
    #[arg(long)]
    pub export_table: bool,

    /// Also run a fresh simulation and report the total-variation
    /// distance between exact and empirical frequencies.
    #[arg(long)]
    pub cross_check: bool,

    /// Steps of the cross-check run.
    #[arg(long, default_value_t = 10_000_000)]
    pub steps: u64,

    #[arg(long, default_value_t = 42)]
    pub seed: u64,

    /// Compare frequencies on odd states up to this value.
    #[arg(long, default_value_t = 99)]
    pub compare_cutoff: u64,
}

#[derive(Args, Serialize)]
#[command(group(ArgGroup::new("target").required(true).args(["m", "range"])))]
pub(crate) struct ReachArgs {
    /// Single odd target (any size); writes certificate.json.
    #[arg(long)]
    pub m: Option<String>,

    /// Inclusive range a..b of odd targets; writes certificates.csv.
    #[arg(long)]
    pub range: Option<String>,

    /// Replay-check every certificate. Verification always runs; the
    /// flag is accepted for explicit scripts.
    #[arg(long)]
    pub verify: bool,
}

#[derive(Args, Serialize)]
pub(crate) struct ExcursionsArgs {
    #[arg(long, default_value = "1")]
    pub x0: String,

    #[arg(long, default_value_t = 1_000_000)]
    pub steps: u64,

    #[arg(long, default_value = "uniform1357")]
    pub xi: String,

    #[arg(long, default_value_t = 42)]
    pub seed: u64,

    #[arg(long, default_value_t = 4)]
    pub replicas: u64,

    /// Excursion threshold on the ln scale.
    #[arg(long = "M", default_value_t = DEFAULT_THRESHOLD)]
    pub threshold_m: f64,

    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub epsilon: f64,

    #[arg(long, default_value_t = DEFAULT_BIT_CAP)]
    pub bit_cap: u64,

    /// Window length of the consecutive-minimal-division growth check.
    #[arg(long, default_value_t = 5)]
    pub growth_window: usize,
}

/// Failure modes with their process exit codes.
#[derive(Debug)]
pub(crate) enum CliError {
    Io(io::Error),
    Usage(String),
    NonConvergence(String),
    Verification(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Usage(_) => 2,
            CliError::NonConvergence(_) => 3,
            CliError::Verification(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Io(e) => write!(f, "i/o: {e}"),
            CliError::Usage(msg) => write!(f, "usage: {msg}"),
            CliError::NonConvergence(msg) => write!(f, "did not converge: {msg}"),
            CliError::Verification(msg) => write!(f, "verification failed: {msg}"),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e)
    }
}

/// Core errors surfacing through the CLI are configuration mistakes
/// unless a command maps them more specifically first.
impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

pub(crate) fn parse_odd(s: &str) -> Result<OddInt, CliError> {
    OddInt::from_str(s).map_err(|e| CliError::Usage(format!("state {s:?}: {e}")))
}

pub(crate) fn parse_dist(s: &str) -> Result<XiDistribution, CliError> {
    XiDistribution::parse(s).map_err(|e| CliError::Usage(format!("noise law {s:?}: {e}")))
}

/// Inclusive `a..b` with a <= b.
pub(crate) fn parse_range(s: &str) -> Result<(u64, u64), CliError> {
    let bad = || CliError::Usage(format!("range {s:?} is not of the form a..b with a <= b"));
    let (lo, hi) = s.split_once("..").ok_or_else(bad)?;
    let lo: u64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: u64 = hi.trim().parse().map_err(|_| bad())?;
    if lo > hi || lo == 0 {
        return Err(bad());
    }
    Ok((lo, hi))
}

/// The odd values inside an inclusive range.
pub(crate) fn odd_values(lo: u64, hi: u64) -> impl Iterator<Item = u64> {
    (lo..=hi).filter(|v| v % 2 == 1)
}

fn init_jobs(jobs: Option<usize>) -> Result<(), CliError> {
    let jobs = match jobs {
        Some(n) => Some(n),
        None => match std::env::var(JOBS_ENV) {
            Ok(v) => Some(v.parse().map_err(|_| {
                CliError::Usage(format!("{JOBS_ENV}={v:?} is not a thread count"))
            })?),
            Err(_) => None,
        },
    };
    if let Some(n) = jobs {
        if n == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .expect("worker pool configured before first use");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_jobs(cli.jobs)?;
    std::fs::create_dir_all(&cli.out)?;
    match cli.command {
        Command::Simulate(args) => simulate::run(&cli.out, &args),
        Command::Classical(args) => classical::run(&cli.out, &args),
        Command::Stationary(args) => stationary::run(&cli.out, &args),
        Command::Reach(args) => reach::run(&cli.out, &args),
        Command::Excursions(args) => excursions::run(&cli.out, &args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
