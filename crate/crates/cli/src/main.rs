mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use disparity::Error;

#[derive(Parser)]
#[command(
    name = "disparity",
    version,
    about = "Causal decomposition of group disparities"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate observed disparity, reduction and remaining disparity.
    Decompose(DecomposeArgs),
    /// Sweep the partial-R² bias formula and benchmark observed covariates.
    Sensitivity(SensitivityArgs),
    /// Draw a dataset from a structural model.
    Simulate(SimulateArgs),
    /// Compute true decompositions of a structural model.
    Oracle(OracleArgs),
    /// Check a configuration (and optionally data, or a model file).
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimatorChoice {
    Weighting,
    Regression,
    Interposed,
    All,
}

#[derive(Args)]
pub struct AnalysisArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Bootstrap replicates; 0 skips intervals.
    #[arg(long, default_value_t = 0)]
    pub bootstrap: usize,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Let mediator effects vary by group in the outcome model.
    #[arg(long)]
    pub differential: bool,
    /// Fail (exit 4) on positivity violations instead of warning.
    #[arg(long)]
    pub strict: bool,
    /// Cap balancing weights at this within-group percentile (0–100).
    #[arg(long)]
    pub trim_pct: Option<f64>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Args)]
pub struct DecomposeArgs {
    #[command(flatten)]
    pub common: AnalysisArgs,
    #[arg(long, value_enum, default_value_t = EstimatorChoice::Weighting)]
    pub estimator: EstimatorChoice,
}

#[derive(Args)]
pub struct SensitivityArgs {
    #[command(flatten)]
    pub common: AnalysisArgs,
    #[arg(long, value_enum, default_value_t = EstimatorChoice::Weighting)]
    pub estimator: EstimatorChoice,
    #[arg(long, default_value_t = 0.5)]
    pub r2_max: f64,
    #[arg(long, default_value_t = 201)]
    pub grid_n: usize,
}

#[derive(Args)]
pub struct ModelArgs {
    /// Structural model file (TOML).
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    pub model: Option<PathBuf>,
    /// Built-in model: joint, interposed, linear, coverage, latent, strata.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub n: usize,
    /// Include the latent confounder column.
    #[arg(long)]
    pub expose_latent: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OracleChoice {
    Exact,
    Mc,
}

#[derive(Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_enum, default_value_t = OracleChoice::Exact)]
    pub method: OracleChoice,
    /// Monte Carlo units.
    #[arg(long, default_value_t = 1_000_000)]
    pub n_mc: usize,
}

#[derive(Args)]
pub struct ValidateArgs {
    #[arg(long, required_unless_present = "model")]
    pub config: Option<PathBuf>,
    #[arg(long, requires = "config")]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub strict: bool,
}

/// Exit status for an error: 2 for configuration and input problems, 4 for
/// positivity under `--strict`, 3 for everything else.
fn exit_code(e: &Error, strict: bool) -> u8 {
    match e {
        Error::Config(_)
        | Error::Ingest { .. }
        | Error::Model(_)
        | Error::Io(_)
        | Error::Csv(_) => 2,
        Error::Positivity(_) if strict => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (result, strict) = match &cli.command {
        Command::Decompose(a) => (commands::decompose(a), a.common.strict),
        Command::Sensitivity(a) => (commands::sensitivity(a), a.common.strict),
        Command::Simulate(a) => (commands::simulate(a), false),
        Command::Oracle(a) => (commands::oracle(a), false),
        Command::Validate(a) => (commands::validate(a), a.strict),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e, strict))
        }
    }
}
