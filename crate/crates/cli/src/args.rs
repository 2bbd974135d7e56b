use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "blocklsi", version, about = "Block LSI certificates and verification campaigns for Gibbs models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Block constants, δ, and the certified ρ from both criteria, as JSON.
    Criteria(CriteriaArgs),
    /// Run one verification campaign and emit a pass/fail CSV table.
    Verify(VerifyArgs),
    /// Symbol and finite-section spectrum of a banded Toeplitz matrix, as JSON.
    Toeplitz(ToeplitzArgs),
}

#[derive(Debug, Args)]
pub struct CriteriaArgs {
    /// Model file (JSON).
    pub model: PathBuf,
    /// Bisection tolerance on ρ.
    #[arg(long, default_value_t = blocklsi_core::DEFAULT_TOL)]
    pub tol: f64,
    /// Probe count for a Latin-hypercube design, or a JSON file of
    /// `{"x": [...], "xi": [...]}` pairs. Only used by non-Gaussian models.
    #[arg(long)]
    pub probes: Option<String>,
    /// Seed for the Latin-hypercube probe design.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Check {
    Theorem1,
    Gibbs,
    Dissipation,
    Transport,
    Prop4,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Model file (JSON); must be Gaussian.
    pub model: PathBuf,
    pub check: Check,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Monte Carlo sample count (gibbs).
    #[arg(long, default_value_t = 200_000)]
    pub samples: usize,
    /// Sampler steps (gibbs).
    #[arg(long, default_value_t = 8)]
    pub steps: usize,
    /// Random instances (theorem1, transport, prop4).
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
    /// Start from the target shifted by this vector, e.g. `2,0`. Replaces the
    /// random instances of theorem1 and transport.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub shift: Option<Vec<f64>>,
    /// Grid spacing (dissipation).
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    /// Time horizon (dissipation).
    #[arg(long, default_value_t = 5.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = blocklsi_core::DEFAULT_TOL)]
    pub tol: f64,
    /// Write the table here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ToeplitzArgs {
    /// Finite-section size.
    #[arg(long, default_value_t = 512)]
    pub m: usize,
    /// Diagonal added to form the precision `diag·I + B_m`.
    #[arg(long, default_value_t = 3.0, allow_hyphen_values = true)]
    pub diag: f64,
    /// Off-diagonal band as `offset:value` pairs.
    #[arg(long, default_value = "1:1,2:-1", allow_hyphen_values = true)]
    pub band: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
