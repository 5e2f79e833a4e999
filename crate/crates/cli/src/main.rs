mod commands;
mod config;
mod error;
mod output;
mod plot;

use clap::{Parser, Subcommand};
use commands::{reproduce::Preset, sample::Format, Context, Outcome};
use error::CliError;
use std::path::PathBuf;
use std::process::ExitCode;

/// Small deviation probabilities of partial sums of stationary Gaussian sequences.
#[derive(Debug, Parser)]
#[command(name = "smalldev", version)]
struct Cli {
    /// Experiment config (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the config seed and every engine seed.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, value_name = "K", env = "SMALLDEV_THREADS")]
    threads: Option<usize>,
    /// Output directory (default `out`).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Band probability of the configured instance by every applicable engine.
    Probability,
    /// Run a preset experiment and compare with its predicted rate.
    Reproduce {
        #[arg(value_enum)]
        preset: Preset,
        /// Smaller ladders and budgets.
        #[arg(long)]
        quick: bool,
        /// Hurst index for the kappa preset.
        #[arg(long, default_value_t = 0.5)]
        hurst: f64,
    },
    /// Property suites, plus instance checks when --config is given.
    Validate {
        /// Trials per suite.
        #[arg(long)]
        trials: Option<usize>,
        /// Number of consecutive seeds to run.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
    },
    /// Write sample paths of the configured measure.
    Sample {
        #[arg(long, default_value_t = 1000)]
        count: usize,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Asymptotic predictions and bounds for the configured instance.
    Rate,
}

fn run(cli: Cli) -> Result<Outcome, CliError> {
    if let Some(k) = cli.threads {
        if k == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    let ctx = Context {
        config: cli.config,
        seed: cli.seed,
        out: cli.out,
    };
    match cli.command {
        Command::Probability => commands::probability::run(&ctx),
        Command::Reproduce {
            preset,
            quick,
            hurst,
        } => commands::reproduce::run(&ctx, preset, quick, hurst),
        Command::Validate { trials, seeds } => commands::validate::run(&ctx, trials, seeds),
        Command::Sample { count, format } => commands::sample::run(&ctx, count, format),
        Command::Rate => commands::rate::run(&ctx),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
