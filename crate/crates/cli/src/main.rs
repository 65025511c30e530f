//! `srcre`: estimate effects on trial data, run simulation studies, and
//! verify the finite-population oracles.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::Common;
use report::CliError;

#[derive(Parser)]
#[command(
    name = "srcre",
    version,
    about = "Regression estimators for staggered rollout cluster randomized experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the configured estimators and write dwate.csv, summary.csv and estimates.json.
    Estimate(Flags),
    /// Run replications and write sim_metrics.csv and sim_report.json.
    Simulate(Flags),
    /// Run the oracle suite and write verify_report.json; exits 4 if a check fails.
    Verify(Flags),
}

#[derive(Args)]
struct Flags {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (default `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; falls back to SRCRE_THREADS.
    #[arg(long)]
    threads: Option<usize>,
    /// Inflate covariances by I/(I-1). Not part of the estimator as defined; off by default.
    #[arg(long)]
    df_correction: bool,
}

fn threads(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    if let Some(n) = flag {
        return Ok(Some(n));
    }
    match std::env::var("SRCRE_THREADS") {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| {
            CliError::validation(
                "invalid_threads",
                &format!("SRCRE_THREADS=`{v}` is not a count"),
            )
        }),
        Err(_) => Ok(None),
    }
}

fn run(command: Command) -> Result<Vec<PathBuf>, CliError> {
    let (name, flags) = match &command {
        Command::Estimate(f) => ("estimate", f),
        Command::Simulate(f) => ("simulate", f),
        Command::Verify(f) => ("verify", f),
    };
    if let Some(n) = threads(flags.threads)? {
        if n == 0 {
            return Err(CliError::validation(
                "invalid_threads",
                "thread count must be positive",
            ));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::new(report::EXIT_OTHER, "thread_pool", &e.to_string()))?;
    }
    let cfg = match &flags.config {
        Some(path) => config::load(path)?,
        None => config::RunConfig::default(),
    };
    let common = Common {
        out: flags.out.clone(),
        seed: flags.seed,
        df_correction: flags.df_correction,
    };
    let result = match command {
        Command::Estimate(_) => match &cfg.estimate {
            Some(e) => commands::estimate(e, &common),
            None => Err(CliError::validation(
                "invalid_config",
                "configuration has no [estimate] table",
            )),
        },
        Command::Simulate(_) => {
            commands::simulate(&cfg.simulate.clone().unwrap_or_default(), &common)
        }
        Command::Verify(_) => commands::verify(&cfg.verify.clone().unwrap_or_default(), &common),
    };
    result.map_err(|e| {
        let e = e.with("subcommand", name);
        match &flags.config {
            Some(p) => e.with("config", p.display().to_string()),
            None => e,
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(files) => {
            for f in files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit as u8)
        }
    }
}
