//! `mem`: maximum-entropy-on-the-mean denoising with empirical priors.
//!
//! Exit codes: 0 success, 1 domain failure (bound violation, no convergence,
//! bad data), 2 usage error.

mod args;
mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand};

use args::{DenoiseArgs, DiagnoseArgs, RatesArgs};
use commands::UsageError;
use manifest::RunManifest;

#[derive(Parser, Debug)]
#[command(name = "mem", version, about = "Maximum entropy on the mean with empirical priors")]
struct Cli {
    /// Worker threads; outputs do not depend on this.
    #[arg(long, global = true, env = "MEM_THREADS", value_parser = clap::value_parser!(u64).range(1..))]
    threads: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Corrupt a ground-truth image, solve, and write the reconstructions.
    Denoise(DenoiseArgs),
    /// Relative error against the full-data solution over a grid of sample sizes.
    Rates(RatesArgs),
    /// Explicit constants and an MGF bound check on the dual ball.
    Diagnose(DiagnoseArgs),
    /// Re-run a command from its manifest.json into a new output directory.
    Replay {
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn replay(path: &PathBuf, out: PathBuf) -> Result<()> {
    let m = RunManifest::read(path)?;
    m.verify_inputs()?;
    let mut params = m.parameters.clone();
    params["out"] = serde_json::to_value(&out)?;
    match m.command.as_str() {
        "denoise" => commands::denoise(&serde_json::from_value(params)?),
        "rates" => commands::rates(&serde_json::from_value(params)?),
        "diagnose" => commands::diagnose(&serde_json::from_value(params)?),
        other => bail!("unknown command '{other}' in {}", path.display()),
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Denoise(a) => commands::denoise(&a),
        Command::Rates(a) => commands::rates(&a),
        Command::Diagnose(a) => commands::diagnose(&a),
        Command::Replay { manifest, out } => replay(&manifest, out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.threads {
        Some(k) => match rayon::ThreadPoolBuilder::new().num_threads(k as usize).build() {
            Ok(pool) => pool.install(|| run(cli.command)),
            Err(e) => Err(e.into()),
        },
        None => run(cli.command),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
