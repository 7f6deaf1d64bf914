//! Command-line driver: class → map → matrix → space → spectrum →
//! determinant → bounds pipelines plus the invariant verification suite.

mod commands;
mod config;
mod pipeline;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "ruelle",
    version,
    about = "Spectral data of expanding circle maps: transfer-operator matrices, \
             resonances, dynamical determinants and bound reports"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Emit the weight table and class diagnostics.
    Class {
        config: PathBuf,
        #[command(flatten)]
        overrides: config::Overrides,
    },
    /// Singular values, resonances and the operator-norm bound reports.
    Spectrum {
        config: PathBuf,
        #[command(flatten)]
        overrides: config::Overrides,
    },
    /// Dynamical determinant by all routes with agreement diagnostics.
    Determinant {
        config: PathBuf,
        #[command(flatten)]
        overrides: config::Overrides,
    },
    /// Envelope and growth bounds with fitted constants and plot scripts.
    Bounds {
        config: PathBuf,
        #[command(flatten)]
        overrides: config::Overrides,
    },
    /// Run the full invariant suite; nonzero exit on any violation.
    Verify {
        config: PathBuf,
        #[command(flatten)]
        overrides: config::Overrides,
    },
}

fn init_threads() {
    if let Ok(v) = std::env::var("RUELLE_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            if n >= 1 {
                // Must happen before the first parallel call.
                let _ = ruelle_core::set_thread_cap(n);
            }
        }
    }
}

fn main() -> ExitCode {
    init_threads();
    let cli = Cli::parse();
    let (config_path, overrides, run): (
        &PathBuf,
        &config::Overrides,
        fn(&config::Resolved) -> anyhow::Result<i32>,
    ) = match &cli.command {
        Command::Class { config, overrides } => (config, overrides, commands::class),
        Command::Spectrum { config, overrides } => (config, overrides, commands::spectrum),
        Command::Determinant { config, overrides } => (config, overrides, commands::determinant),
        Command::Bounds { config, overrides } => (config, overrides, commands::bounds),
        Command::Verify { config, overrides } => (config, overrides, commands::verify),
    };

    let resolved = match config::load(config_path, overrides) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("config error: {e:#}");
            return ExitCode::from(2);
        }
    };
    match run(&resolved) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code_for(&e) as u8)
        }
    }
}
