use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gpec_cli::experiments;
use gpec_cli::{CliError, Overrides, RunConfig};

#[derive(Parser)]
#[command(
    name = "gpec",
    version,
    about = "Decision-boundary-aware uncertainty for feature attributions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides kernel.lambda.
    #[arg(long)]
    lambda: Option<f64>,
    /// Overrides kernel.rho.
    #[arg(long)]
    rho: Option<f64>,
    /// Overrides the master seed (also read from GPEC_SEED).
    #[arg(long, env = "GPEC_SEED")]
    seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the explanation GP and write uncertainty heatmaps.
    Heatmap(Common),
    /// Compare mean uncertainty across model regularization variants.
    SweepRegularization(Common),
    /// Compare uncertainty with and without explainer noise.
    Combined(Common),
    /// Sweep lambda and rho over a shared boundary.
    Sensitivity(Common),
    /// Report setup and per-sample inference times.
    Timing(Common),
    /// Sample the decision boundary and build the geodesic index.
    SampleBoundary(Common),
    /// Check positive semi-definiteness of the geodesic kernel per lambda.
    ValidateLambda(Common),
}

fn load(common: &Common) -> Result<RunConfig, CliError> {
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(CliError::config("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config(e.to_string()))?;
    }
    RunConfig::load(
        &common.config,
        &Overrides {
            lambda: common.lambda,
            rho: common.rho,
            seed: common.seed,
        },
    )
}

type Runner = fn(&RunConfig) -> Result<(), CliError>;

fn run(cli: Cli) -> Result<(), CliError> {
    let (common, run): (&Common, Runner) = match &cli.command {
        Command::Heatmap(c) => (c, |c| experiments::run_heatmap(c).map(drop)),
        Command::SweepRegularization(c) => (c, |c| experiments::run_regularization_sweep(c).map(drop)),
        Command::Combined(c) => (c, |c| experiments::run_combined(c).map(drop)),
        Command::Sensitivity(c) => (c, |c| experiments::run_sensitivity(c).map(drop)),
        Command::Timing(c) => (c, |c| experiments::run_timing(c).map(drop)),
        Command::SampleBoundary(c) => (c, |c| experiments::run_sample_boundary(c).map(drop)),
        Command::ValidateLambda(c) => (c, |c| experiments::run_validate_lambda(c).map(drop)),
    };
    let config = load(common)?;
    let summary = config.output.join(experiments::SUMMARY_FILE);
    if summary.exists() {
        std::fs::remove_file(&summary)?;
    }
    let result = run(&config);
    // The combined run writes its table before reporting a failed check.
    if let Ok(text) = std::fs::read_to_string(&summary) {
        print!("{text}");
    }
    result?;
    println!("output in {}", config.output.display());
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
