use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gaplm_cli::config::{resolve, RunArgs};
use gaplm_cli::run::{run_average, run_predict, run_screen, run_simulate, SimArgs};
use gaplm_cli::{CliError, Result};

#[derive(Parser)]
#[command(
    name = "gaplm",
    version,
    about = "Cross-validation model averaging for generalized additive partial linear models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit candidates, choose weights, report weights and importance.
    Average(RunArgs),
    /// Rank covariates by squared distance correlation with the response.
    Screen(RunArgs),
    /// Variable importance from the averaging weights.
    Importance(RunArgs),
    /// Run a simulation study.
    Simulate(SimArgs),
    /// Apply a saved model to new rows.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn set_threads(threads: Option<usize>) -> Result<()> {
    if let Some(t) = threads {
        if t == 0 {
            return Err(CliError::Config("threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Average(a) => {
            let cfg = resolve(a)?;
            set_threads(cfg.threads)?;
            run_average(&cfg, false)
        }
        Command::Importance(a) => {
            let cfg = resolve(a)?;
            set_threads(cfg.threads)?;
            run_average(&cfg, true)
        }
        Command::Screen(a) => {
            let cfg = resolve(a)?;
            set_threads(cfg.threads)?;
            run_screen(&cfg)
        }
        Command::Simulate(a) => {
            set_threads(a.threads)?;
            run_simulate(&a)
        }
        Command::Predict { model, input, output } => run_predict(&model, &input, output.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gaplm: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
