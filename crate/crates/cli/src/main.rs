use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, ValueEnum};
use qbcsma::config::parse_config;
use qbcsma::runner::{run, Command};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Sub {
    Enumerate,
    Stationary,
    Simulate,
    Fluid,
    Convergence,
    Homogenize,
    Hitting,
    Epochs,
    Sumlaw,
}

impl From<Sub> for Command {
    fn from(s: Sub) -> Self {
        match s {
            Sub::Enumerate => Command::Enumerate,
            Sub::Stationary => Command::Stationary,
            Sub::Simulate => Command::Simulate,
            Sub::Fluid => Command::Fluid,
            Sub::Convergence => Command::Convergence,
            Sub::Homogenize => Command::Homogenize,
            Sub::Hitting => Command::Hitting,
            Sub::Epochs => Command::Epochs,
            Sub::Sumlaw => Command::Sumlaw,
        }
    }
}

/// Queue-based CSMA: exact measures, simulation, fluid limits and scaling experiments.
#[derive(Debug, Parser)]
#[command(name = "qbcsma", version)]
struct Cli {
    /// Operation to run.
    #[arg(value_enum)]
    subcommand: Sub,
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Master seed, overriding the one in the configuration.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let text = match fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", cli.config.display());
            return ExitCode::from(1);
        }
    };
    let mut cfg = match parse_config(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let cmd = Command::from(cli.subcommand);
    match run(&cfg, cmd, &cli.out) {
        Ok(outcome) => {
            if matches!(cmd, Command::Stationary) {
                if let Ok(text) = fs::read_to_string(cli.out.join("stationary.json")) {
                    print!("{text}");
                }
            }
            for f in &outcome.files {
                eprintln!("wrote {}", cli.out.join(f).display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
