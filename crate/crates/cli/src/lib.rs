//! Command-line driver: `simulate`, `estimate`, `slice` and `montecarlo`.
//!
//! Exit codes: 0 on success, 1 on usage errors (bad flags, unreadable or
//! malformed configuration), 2 when the computation itself fails.

// Negated comparisons are used on purpose to reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, CommandFactory, Parser, Subcommand};

pub use commands::{parse_grid, parse_start};

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "gcov", version, about = "Identify mixed causal/noncausal VAR models by GCov estimation")]
pub struct Cli {
    /// Log filter (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "warn")]
    pub log: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a stationary mixed VAR path to CSV.
    Simulate(SimulateArgs),
    /// Estimate a VAR by GCov from a CSV series.
    Estimate(EstimateArgs),
    /// Objective along one coefficient, others held fixed.
    Slice(SliceArgs),
    /// Replicated simulation and estimation with frequency tables.
    Montecarlo(MontecarloArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// JSON configuration; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Row-major coefficients of Θ₁, …, Θ_p.
    #[arg(long, allow_hyphen_values = true)]
    pub theta: Option<String>,
    /// Dimension, required with --theta.
    #[arg(long)]
    pub n: Option<usize>,
    /// VAR lag order (default 1).
    #[arg(long)]
    pub p: Option<usize>,
    /// Retained sample length.
    #[arg(long)]
    pub t: Option<usize>,
    /// Fraction discarded at each end of the raw path.
    #[arg(long)]
    pub trim: Option<f64>,
    /// Student-t degrees of freedom.
    #[arg(long, conflicts_with = "normal")]
    pub dof: Option<f64>,
    /// Gaussian errors instead of Student-t.
    #[arg(long)]
    pub normal: bool,
    /// RNG seed (default 0).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output CSV; a manifest is written next to it. Defaults to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct ObjectiveArgs {
    /// Highest autocovariance lag H.
    #[arg(long)]
    pub h: Option<usize>,
    /// Transform set: T1, T2, T3 or T4.
    #[arg(long)]
    pub transforms: Option<String>,
    /// gcov22 or gcov17.
    #[arg(long)]
    pub variant: Option<String>,
    /// Ridge added to the standardized lag-0 covariance.
    #[arg(long)]
    pub ridge: Option<f64>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct ScheduleArgs {
    /// Use the long schedule (Q=200, M=1000) instead of the desk default.
    #[arg(long)]
    pub long_schedule: bool,
    /// Initial annealing temperature.
    #[arg(long)]
    pub t_max: Option<f64>,
    /// Cooling factor per stage.
    #[arg(long)]
    pub r: Option<f64>,
    /// Number of temperature stages.
    #[arg(long)]
    pub q: Option<usize>,
    /// Proposals per stage.
    #[arg(long)]
    pub m: Option<usize>,
    /// Lower bound of the coefficient box.
    #[arg(long, allow_hyphen_values = true)]
    pub theta_min: Option<f64>,
    /// Upper bound of the coefficient box.
    #[arg(long, allow_hyphen_values = true)]
    pub theta_max: Option<f64>,
    /// Independent annealing chains; the best is polished.
    #[arg(long)]
    pub restarts: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// JSON configuration; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Input CSV (rows are time).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// VAR lag order (default 1).
    #[arg(long)]
    pub p: Option<usize>,
    /// Comma-separated starts: ols, reverse_ols, causal_counterpart,
    /// noncausal_counterpart, random_mixed:N1:N2, annealed.
    #[arg(long)]
    pub start: Option<String>,
    #[command(flatten)]
    pub objective: ObjectiveArgs,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    /// Drop rows with missing cells instead of failing.
    #[arg(long)]
    pub drop_missing: bool,
    /// Seed for random and annealed starts (default 0).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Annealing trace CSV (stage, temperature, accept_rate, f_best).
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Result JSON; defaults to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SliceArgs {
    /// JSON configuration; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Coefficient as ROW,COL (1-based); repeat for several slices.
    #[arg(long)]
    pub entry: Vec<String>,
    /// Lag of the coefficient (1-based).
    #[arg(long)]
    pub lag: Option<usize>,
    /// Grid as START:STOP:STEP, inclusive.
    #[arg(long, allow_hyphen_values = true)]
    pub grid: Option<String>,
    /// Base parameters as row-major coefficients; defaults to OLS.
    #[arg(long, allow_hyphen_values = true)]
    pub theta: Option<String>,
    /// VAR lag order (default 1).
    #[arg(long)]
    pub p: Option<usize>,
    #[command(flatten)]
    pub objective: ObjectiveArgs,
    #[arg(long)]
    pub drop_missing: bool,
    /// Accepted for symmetry with the other commands; slices use no randomness.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output CSV. With several entries, `_ROWCOL` is appended to the stem.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MontecarloArgs {
    /// Experiment configuration JSON.
    #[arg(long)]
    pub config: PathBuf,
    /// Report directory; a summary is printed to stdout either way.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Base seed; replication i uses seed + i.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub replications: Option<usize>,
    /// Run replications on one thread.
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(gcov_core::Error),
}

impl From<gcov_core::Error> for CliError {
    fn from(e: gcov_core::Error) -> Self {
        CliError::Runtime(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Runtime(e) => write!(f, "error: {e}"),
        }
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    let _ = env_logger::Builder::new().parse_filters(&cli.log).try_init();
    let result = match &cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Estimate(a) => commands::estimate(a),
        Command::Slice(a) => commands::slice(a),
        Command::Montecarlo(a) => commands::montecarlo(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            if let CliError::Usage(_) = e {
                let mut cmd = Cli::command();
                if let Some(sub) = cmd.find_subcommand_mut(subcommand_name(&cli.command)) {
                    let _ = sub.write_help(&mut std::io::stderr());
                }
            }
            e.exit_code()
        }
    }
}

fn subcommand_name(c: &Command) -> &'static str {
    match c {
        Command::Simulate(_) => "simulate",
        Command::Estimate(_) => "estimate",
        Command::Slice(_) => "slice",
        Command::Montecarlo(_) => "montecarlo",
    }
}
