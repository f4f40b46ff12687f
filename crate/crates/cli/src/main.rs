//! `gkls`: exact evaluation, certificate checks, simulation, phase diagrams and
//! current-density sweeps for the generalized KLS exclusion process.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gkls_core::GklsError;

mod commands;
mod output;
mod params;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Certificate(String),
    Resource(String),
    Degenerate(String),
    Io(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Certificate(_) | CliError::Io(_) | CliError::Internal(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Resource(_) => 3,
            CliError::Degenerate(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Certificate(m) => write!(f, "certificate failed: {m}"),
            CliError::Resource(m) => write!(f, "resource limit: {m}"),
            CliError::Degenerate(m) => write!(f, "degenerate model: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

impl From<GklsError> for CliError {
    fn from(e: GklsError) -> Self {
        let msg = e.to_string();
        match e {
            GklsError::InvalidParameter(_) | GklsError::Index { .. } | GklsError::Domain(_) => CliError::Usage(msg),
            GklsError::Resource { .. } => CliError::Resource(msg),
            GklsError::Reducible { .. } | GklsError::Degenerate(_) => CliError::Degenerate(msg),
            GklsError::NotConverged { .. } | GklsError::NonMonotone { .. } => CliError::Internal(msg),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "gkls", version, about = "Generalized KLS exclusion process toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// `key = value` parameter file; flags override its entries.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, env = "GKLS_OUT_DIR", default_value = "gkls-out")]
    pub out_dir: PathBuf,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for grids and replicas (default: all cores).
    #[arg(long, global = true, env = "GKLS_WORKERS")]
    pub workers: Option<usize>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Transfer-matrix values: density, current, correlations, eigenvalues.
    Exact(ExactArgs),
    /// Invariance, detailed-balance and block-identity residuals from the full generator.
    Verify(VerifyArgs),
    /// Kinetic Monte Carlo run.
    Simulate(SimulateArgs),
    /// Current-density curve and extremal-current phase diagram.
    Phases(PhasesArgs),
    /// Current-density curves for a list of (r, kappa) pairs.
    Sweep(SweepArgs),
}

/// Model parameters shared by all subcommands. Values are strings so that flags
/// and config entries go through one parser.
#[derive(Args, Debug, Default)]
pub struct ModelArgs {
    #[arg(long)]
    pub r: Option<String>,
    #[arg(long)]
    pub ell: Option<String>,
    #[arg(long)]
    pub kappa: Option<String>,
    #[arg(long)]
    pub lambda: Option<String>,
    #[arg(long, visible_alias = "eps")]
    pub epsilon: Option<String>,
    #[arg(long)]
    pub x: Option<String>,
    #[arg(long)]
    pub y: Option<String>,
    #[arg(long)]
    pub phi: Option<String>,
    #[arg(long = "J")]
    pub coupling: Option<String>,
    /// periodic or open
    #[arg(long)]
    pub topology: Option<String>,
    /// vacuum-extended (default) or as-written
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub alpha1: Option<String>,
    #[arg(long)]
    pub alpha2: Option<String>,
    #[arg(long)]
    pub gamma1: Option<String>,
    #[arg(long)]
    pub gamma2: Option<String>,
    #[arg(long)]
    pub beta1: Option<String>,
    #[arg(long)]
    pub beta2: Option<String>,
    #[arg(long)]
    pub delta1: Option<String>,
    #[arg(long)]
    pub delta2: Option<String>,
    #[arg(long)]
    pub omega1m: Option<String>,
    #[arg(long)]
    pub omega2m: Option<String>,
    #[arg(long)]
    pub omega1p: Option<String>,
    #[arg(long)]
    pub omega2p: Option<String>,
}

impl ModelArgs {
    pub fn flags(&self) -> Vec<(&'static str, Option<String>)> {
        vec![
            ("r", self.r.clone()),
            ("ell", self.ell.clone()),
            ("kappa", self.kappa.clone()),
            ("lambda", self.lambda.clone()),
            ("epsilon", self.epsilon.clone()),
            ("x", self.x.clone()),
            ("y", self.y.clone()),
            ("phi", self.phi.clone()),
            ("J", self.coupling.clone()),
            ("topology", self.topology.clone()),
            ("variant", self.variant.clone()),
            ("alpha1", self.alpha1.clone()),
            ("alpha2", self.alpha2.clone()),
            ("gamma1", self.gamma1.clone()),
            ("gamma2", self.gamma2.clone()),
            ("beta1", self.beta1.clone()),
            ("beta2", self.beta2.clone()),
            ("delta1", self.delta1.clone()),
            ("delta2", self.delta2.clone()),
            ("omega1m", self.omega1m.clone()),
            ("omega2m", self.omega2m.clone()),
            ("omega1p", self.omega1p.clone()),
            ("omega2p", self.omega2p.clone()),
        ]
    }
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
pub struct ExactArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Comma-separated lengths; `inf` for the thermodynamic limit.
    #[arg(long = "L")]
    pub len: Option<String>,
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long = "L")]
    pub len: Option<String>,
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long = "L")]
    pub len: Option<String>,
    /// Measured events (default 1e6 unless --time is given).
    #[arg(long)]
    pub events: Option<String>,
    /// Measured time instead of an event count.
    #[arg(long)]
    pub time: Option<String>,
    /// Burn-in events (default max(10 L^2, 1e6)).
    #[arg(long)]
    pub burn_in: Option<String>,
    #[arg(long)]
    pub batches: Option<String>,
    /// empty, full, bernoulli:P, fixed:N or an explicit 0/1 string
    #[arg(long)]
    pub initial: Option<String>,
    /// Independent replicas with derived seeds.
    #[arg(long)]
    pub replicas: Option<String>,
    /// Record the time fraction spent in every state (L <= 20).
    #[arg(long)]
    pub histogram: bool,
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
pub struct PhasesArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Curve sample count (at least 100).
    #[arg(long)]
    pub points: Option<String>,
    /// Phase grid resolution n (n x n cells, n >= 2).
    #[arg(long)]
    pub grid: Option<String>,
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
pub struct SweepArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// `r:kappa` pairs separated by commas, e.g. `1.606:0.65,1.72:0.389`.
    #[arg(long)]
    pub pairs: Option<String>,
    #[arg(long)]
    pub points: Option<String>,
    /// Add Monte Carlo points on a ring.
    #[arg(long)]
    pub simulate: bool,
    /// Fugacities of the Monte Carlo points, comma-separated.
    #[arg(long)]
    pub sim_x: Option<String>,
    #[arg(long)]
    pub sim_len: Option<String>,
    #[arg(long)]
    pub events: Option<String>,
    #[arg(long)]
    pub burn_in: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if n == 0 {
            eprintln!("usage error: --workers must be positive");
            return ExitCode::from(2);
        }
        // the global pool can only be configured once per process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match commands::dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("gkls: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
