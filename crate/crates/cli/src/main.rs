//! `blowup`: classification, iteration replay, single runs, sweeps and reports.

mod commands;
mod config;
mod exit;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::exit::CliError;

#[derive(Parser, Debug)]
#[command(
    name = "blowup",
    version,
    about = "Blow-up thresholds and lifespan experiments"
)]
struct Cli {
    /// TOML configuration file.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set model.b=3` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Output directory (overrides `output` in the config).
    #[arg(short, long, global = true)]
    out: Option<PathBuf>,
    /// Print newline-delimited JSON records instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Dissipation and growth classes, thresholds, and the lifespan bound family.
    Classify,
    /// Replay the slicing iteration and print its sequences.
    Iterate {
        #[arg(long)]
        j_max: Option<usize>,
    },
    /// One ODE or PDE run at the configured epsilon.
    Run,
    /// Epsilon sweep with the configured engine, then the theory fit.
    Sweep,
    /// Refit a finished sweep from its files and emit plot data.
    Report {
        /// Sweep directory (defaults to the configured output).
        dir: Option<PathBuf>,
    },
    /// Quick built-in oracle checks.
    Selftest,
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    if let Command::Selftest = cli.command {
        return commands::cmd_selftest(cli.json);
    }
    if let Command::Report { dir: Some(dir) } = &cli.command {
        return commands::cmd_report(dir, cli.json);
    }
    let mut cfg = config::load(cli.config.as_deref(), &cli.overrides)?;
    if let Some(out) = &cli.out {
        cfg.output = out.clone();
    }
    match &cli.command {
        Command::Classify => commands::cmd_classify(&cfg, cli.json),
        Command::Iterate { j_max } => commands::cmd_iterate(&cfg, *j_max, cli.json),
        Command::Run => commands::cmd_run(&cfg, cli.json),
        Command::Sweep => commands::cmd_sweep(&cfg, cli.json),
        Command::Report { .. } => commands::cmd_report(&cfg.output, cli.json),
        Command::Selftest => unreachable!(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code() as u8)
        }
    }
}
