use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hairpin_cli::commands;
use hairpin_cli::config::Config;
use hairpin_cli::error::Result;

/// Simulate, fit, and summarize double-stranded DNA methylation transmission
/// models from hairpin-bisulfite pattern data.
#[derive(Parser)]
#[command(name = "hairpin", version, about)]
struct Cli {
    /// Flat key=value configuration file ('#' comments allowed)
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Master random seed (overrides the config file)
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory (default "out")
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Worker threads for multi-chain fitting (0 = all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset plus its generating rates
    Simulate,
    /// Run MCMC chains and write per-chain sample CSVs and a manifest
    Fit {
        /// Dataset path (overrides the config 'data' key)
        #[arg(long, value_name = "PATH")]
        data: Option<PathBuf>,
        /// Pin both conversion error rates to zero (the error-blind model)
        #[arg(long)]
        no_error: bool,
        /// Sample the prior alone (requires 'sites')
        #[arg(long)]
        prior_only: bool,
    },
    /// Pool chain CSVs into summary JSON, scatter and per-site CSVs
    Summarize {
        /// Chain CSV files (alternative to the 'samples' config key)
        #[arg(value_name = "CSV")]
        samples: Vec<PathBuf>,
        /// Also emit SVG plots
        #[arg(long)]
        svg: bool,
    },
    /// Print the dataset log-likelihood at given rates
    Loglik {
        /// Dataset path (overrides the config 'data' key)
        #[arg(long, value_name = "PATH")]
        data: Option<PathBuf>,
    },
    /// Run the verification oracles and write a report
    Oracle,
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut cfg = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.set("seed", seed.to_string());
    }
    if let Some(out) = &cli.out {
        cfg.set("out", out.display().to_string());
    }
    if let Some(threads) = cli.threads {
        cfg.set("threads", threads.to_string());
    }
    Ok(cfg)
}

fn dispatch(cli: &Cli) -> Result<()> {
    let mut cfg = load_config(cli)?;
    match &cli.command {
        Command::Simulate => commands::simulate::run(&cfg),
        Command::Fit { data, no_error, prior_only } => {
            if let Some(path) = data {
                cfg.set("data", path.display().to_string());
            }
            if *no_error {
                cfg.set("with_error", "false");
            }
            if *prior_only {
                cfg.set("prior_only", "true");
            }
            commands::fit::run(&cfg)
        }
        Command::Summarize { samples, svg } => commands::summarize::run(&cfg, samples, *svg),
        Command::Loglik { data } => {
            if let Some(path) = data {
                cfg.set("data", path.display().to_string());
            }
            commands::loglik::run(&cfg)
        }
        Command::Oracle => commands::oracle::run(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.kind.code() as u8)
        }
    }
}
