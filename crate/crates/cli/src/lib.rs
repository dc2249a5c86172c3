//! Configuration-driven front end for the `wentzell-core` suites.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod verify;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::commands::Context;
use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::OutDir;

#[derive(Debug, Parser)]
#[command(name = "wentzell", version, about = "Run the p-ellipticity, contractivity and flow suites from a JSON config")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` of the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// RNG seed; overrides `seed` of the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Ellipticity constants and angles (JSON and CSV).
    Constants,
    /// Angle of p-ellipticity with its explicit lower bounds.
    Angle,
    /// Bellman convexity sweep over delta.
    Bellman,
    /// Implicit Euler trajectories and their hybrid L^p norms.
    Simulate,
    /// Heat-flow energies and the bilinear integral.
    Flows,
    /// Koch prefractal masses and the measure-density constant.
    Geometry,
    /// All selected suites as one pass/fail table.
    Verify,
}

fn context(cli: &Cli) -> Result<Context, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config { path: "--config".into(), message: "a config file is required".into() })?;
    if !path.is_file() {
        return Err(CliError::Config { path: "--config".into(), message: format!("file not found: {}", path.display()) });
    }
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    let out = OutDir::create(&cfg.output_dir)?;
    Ok(Context { cfg, out })
}

fn execute(cli: &Cli) -> Result<bool, CliError> {
    let ctx = context(cli)?;
    match cli.command {
        Command::Constants => commands::constants(&ctx)?,
        Command::Angle => commands::angle(&ctx)?,
        Command::Bellman => commands::bellman(&ctx)?,
        Command::Simulate => commands::simulate(&ctx)?,
        Command::Flows => commands::flows(&ctx)?,
        Command::Geometry => commands::geometry(&ctx)?,
        Command::Verify => {
            let rows = verify::run(&ctx).map_err(|e| match e {
                CliError::Module { suite, source } => CliError::Suite { suite, source },
                other => other,
            })?;
            for w in &rows.warnings {
                eprintln!("warning: {w}");
            }
            ctx.out.write_csv("verify.csv", &rows.rows)?;
            let failed = rows.rows.iter().filter(|r| !r.pass).count();
            let asserted = rows.rows.iter().filter(|r| r.status == "asserted").count();
            println!("{asserted} assertions, {failed} failed");
            return Ok(rows.all_pass());
        }
    }
    Ok(true)
}

/// Runs a parsed command line and returns the process exit code.
///
/// 0 success, 1 configuration error, 2 non-elliptic field, 3 suite error, 4 failed assertions.
pub fn run(cli: &Cli) -> i32 {
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("warning: --jobs ignored: {e}");
        }
    }
    match execute(cli) {
        Ok(true) => 0,
        Ok(false) => 4,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
