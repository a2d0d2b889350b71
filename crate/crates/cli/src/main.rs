mod args;
mod commands;
mod report;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use args::{EvaluateArgs, PredictArgs, SelectArgs, SimulateArgs, TuneArgs};

/// Bayesian variable selection for right-censored survival data.
#[derive(Debug, Parser)]
#[command(name = "survsel", version, about)]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "SURVSEL_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Search the model space and report HPPM, MPM and inclusion probabilities.
    Select(SelectArgs),
    /// Choose the prior scale tau from a null simulation.
    Tune(TuneArgs),
    /// Run simulation replicates and score the selected models.
    Simulate(SimulateArgs),
    /// Cross-validated time-dependent AUC.
    Evaluate(EvaluateArgs),
    /// Survival curves for new subjects.
    Predict(PredictArgs),
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Numerical(String),
}

impl CliError {
    pub fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }

    fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<survsel::Error> for CliError {
    fn from(e: survsel::Error) -> Self {
        if e.is_validation() {
            CliError::Validation(e.to_string())
        } else {
            CliError::Numerical(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn run(cli: Cli) -> CliResult<()> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(CliError::validation("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::validation(e.to_string()))?;
    }
    match cli.command {
        Command::Select(a) => commands::select(&a),
        Command::Tune(a) => commands::tune(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Predict(a) => commands::predict(&a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (kind, message) = match &e {
                CliError::Validation(m) => ("validation", m),
                CliError::Numerical(m) => ("numerical", m),
            };
            eprintln!("{}", serde_json::json!({ "error": { "kind": kind, "message": message } }));
            ExitCode::from(e.code())
        }
    }
}
