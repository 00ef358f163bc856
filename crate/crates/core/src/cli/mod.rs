//! `qtk` command-line interface.
//!
//! Every subcommand reads one JSON config and writes its outputs into a
//! directory. Exit codes: 0 success, 1 I/O failure, 2 invalid input,
//! 3 QT fit non-convergence (best attempt still written).

mod commands;
pub mod config;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::QtError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NONCONVERGENCE: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    Invalid(String),
    NonConvergence(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => EXIT_INVALID,
            CliError::NonConvergence(_) => EXIT_NONCONVERGENCE,
            CliError::Io(_) => EXIT_IO,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Invalid(m) | CliError::NonConvergence(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

impl From<QtError> for CliError {
    fn from(e: QtError) -> Self {
        match e {
            QtError::NonConvergence { .. } => CliError::NonConvergence(e.to_string()),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

const COMMON_KEYS: &str = "\
Common optional keys: \"seed\" (integer, default 0), \"out\" (output directory,
overridden by --out), \"precision\" (significant digits of every real, 1..=17,
default 17). Unknown keys are rejected.";

const PME_SOLVE_HELP: &str = "\
Integrates a Pauli master equation and reports its stationary state.

Config:
  {\"W\": [[0, 2], [1, 0]], \"p0\": [0, 1], \"t_end\": 20, \"dt\": 0.001}
  W[i][k] is the rate of the jump k -> i (diagonal ignored). dt defaults to
  1e-3 / max rate.

Writes trajectory.csv (t,y1..yN,entropy,sum_drift; entropy is -sum p ln p)
and report.json {stationary, eigenvalues ([re, im] pairs), flags
{symmetric, doubly_stochastic}, final_state, t_end, dt}.";

const QT_FIT_HELP: &str = "\
Fits the quadratic-entropy representation of a rate matrix.

Config:
  {\"W\": [[0, 1, 1], [1, 0, 1], [1, 1, 0]], \"seed\": 7, \"max_restarts\": 50,
   \"tolerance\": 1e-8}

Writes representation.json {n, q, r, subsets, norm, residual}. q is the
entropy matrix with gauge q[N-1][N-1] = 0, r the weights of the
Hamiltonian-like terms (one per entry of subsets, 0-based indices into the
difference basis e_b - e_(b+1)). Exit 3 when the residual stays above the
tolerance;
the best attempt is still written.";

const RELAX_CLASSIFY_HELP: &str = "\
Classifies three-state relaxation as monotone or oscillatory.

Config:
  {\"rates\": [a, b, c, d, e, f]}
  with a = W21, b = W31, c = W12, d = W32, e = W13, f = W23.

Writes report.json {rates, xi, eta, constant, disc, k, l, m, omega, u, v,
ellipse, eigenvalues, monotonic, boundary}.";

const RELAX_SCAN_HELP: &str = "\
Seeded random scan of three-state rate space.

Config:
  {\"samples\": 100000, \"low\": 0, \"high\": 1, \"constraint\": \"none\",
   \"bins\": 10, \"seed\": 1}
  constraint is \"none\" or \"omega_zero\" (b, c, f rescaled so that
  a+d+e = b+c+f).

Writes scan.csv (a,b,c,d,e,f,xi,disc,omega,u,v,monotonic) and summary.json
{seed, low, high, constraint, samples, oscillatory, fraction_oscillatory,
bins}. QTK_THREADS caps the worker threads.";

const LINDBLAD_HELP: &str = "\
Integrates two-state Lindblad dynamics in Bloch form.

Config:
  {\"h\": [0, 0, 0], \"dissipators\": [{\"A\": [1, 0, 0], \"B\": [0, 1, 0]}],
   \"P0\": [0, 0, -1], \"t_end\": 10, \"dt\": 0.001, \"gradient_check\": true}
  Each dissipator is R = (A + iB).sigma. h defaults to zero.
  With gradient_check (default true) a channel with h != 0 or more than one
  dissipator is rejected with \"gradient form unavailable\".

Writes trajectory.csv (t,y1..y3 = P, entropy, sum_drift of P1+P2+P3) and
report.json {stationary, stationary_norm, pure, gradient_residual,
six_state_residual, final_state, t_end, dt}. The residuals are taken over
100 seeded points of the Bloch ball and are null without the gradient form.";

const COMPOSITE_HELP: &str = "\
Composite of two symmetric two-state systems with coupled entropy.

Config:
  {\"a\": 2, \"c\": 2, \"k\": 1}
  a, c are the subsystem rates, k the Boltzmann constant (default 1).

Writes report.json {a, c, k, lambda, q, gradient_residual, stationary,
tsallis {q, one_minus_q_over_k, minus_lambda, mismatch}}. gradient_residual is
the worst mismatch between the contraction flow and the generator over 20
seeded states.";

#[derive(Debug, Parser)]
#[command(
    name = "qtk",
    version,
    about = "Fit, check and simulate QT forms of master equations",
    after_help = COMMON_KEYS
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate a Pauli master equation.
    #[command(long_about = PME_SOLVE_HELP, after_long_help = COMMON_KEYS)]
    PmeSolve(RunArgs),
    /// Fit the QT representation of a rate matrix.
    #[command(long_about = QT_FIT_HELP, after_long_help = COMMON_KEYS)]
    QtFit(RunArgs),
    /// Classify one three-state rate tuple.
    #[command(long_about = RELAX_CLASSIFY_HELP, after_long_help = COMMON_KEYS)]
    RelaxClassify(RunArgs),
    /// Scan random three-state rate tuples.
    #[command(long_about = RELAX_SCAN_HELP, after_long_help = COMMON_KEYS)]
    RelaxScan(RunArgs),
    /// Integrate two-state Lindblad dynamics.
    #[command(long_about = LINDBLAD_HELP, after_long_help = COMMON_KEYS)]
    Lindblad(RunArgs),
    /// Report on the composite-system entropy.
    #[command(long_about = COMPOSITE_HELP, after_long_help = COMMON_KEYS)]
    Composite(RunArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// JSON config file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides "out" in the config).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Keep every n-th trajectory sample in CSV output.
    #[arg(long, default_value_t = 1, value_parser = parse_stride)]
    pub stride: usize,
}

fn parse_stride(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(n) if n > 0 => Ok(n),
        _ => Err(format!("stride must be a positive integer, got {s:?}")),
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    use config::load;
    match command {
        Command::PmeSolve(a) => commands::pme_solve(&a, load(&a.config)?),
        Command::QtFit(a) => commands::qt_fit(&a, load(&a.config)?),
        Command::RelaxClassify(a) => commands::relax_classify(&a, load(&a.config)?),
        Command::RelaxScan(a) => commands::relax_scan(&a, load(&a.config)?),
        Command::Lindblad(a) => commands::lindblad(&a, load(&a.config)?),
        Command::Composite(a) => commands::composite(&a, load(&a.config)?),
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("qtk: {e}");
            e.exit_code()
        }
    }
}
