use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod render;

#[derive(Debug, Parser)]
#[command(name = "vlscore", version, about = "Debiased generative image-text retrieval scoring")]
struct Cli {
    /// JSON config file; explicit flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads for data-parallel evaluation.
    #[arg(long, global = true, env = "VLSCORE_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Aggregate token log-probabilities into per-pair scores (CSV).
    Score(commands::ScoreArgs),
    /// Estimate the language prior of every text (JSON).
    Prior(commands::PriorArgs),
    /// Write debiased scores for every image-text pair (CSV).
    Debias(commands::DebiasArgs),
    /// Evaluate a retrieval protocol at a fixed alpha.
    Eval(commands::EvalArgs),
    /// Grid-search alpha, optionally with repeated half-split cross-validation.
    Tune(commands::TuneArgs),
    /// Generate a synthetic world and export it as a score bank.
    Synth(commands::SynthArgs),
    /// Merge eval reports and tuning curves into tables.
    Report(commands::ReportArgs),
}

#[derive(Debug)]
pub enum CliError {
    Core(vlscore::Error),
    Usage(String),
    Io(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Io(m) => write!(f, "io error: {m}"),
        }
    }
}

impl From<vlscore::Error> for CliError {
    fn from(e: vlscore::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl CliError {
    /// 3 for numerical failures, 2 for everything else (bad input).
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = config::load_config(cli.config.as_deref())?;
    let ctx = commands::Context {
        config,
        threads: cli.threads,
    };
    match &cli.command {
        Command::Score(a) => commands::score(&ctx, a),
        Command::Prior(a) => commands::prior(&ctx, a),
        Command::Debias(a) => commands::debias(&ctx, a),
        Command::Eval(a) => commands::eval(&ctx, a),
        Command::Tune(a) => commands::tune(&ctx, a),
        Command::Synth(a) => commands::synth(&ctx, a),
        Command::Report(a) => commands::report(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.threads {
        Some(0) => Err(CliError::Usage("--threads must be >= 1".into())),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| run(cli)),
            Err(e) => Err(CliError::Usage(format!("cannot build thread pool: {e}"))),
        },
        None => run(cli),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
