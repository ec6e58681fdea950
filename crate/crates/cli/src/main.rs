use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use yoctoforce_cli::commands::{cmd_phase, cmd_sweep, cmd_theory, cmd_validate};
use yoctoforce_cli::config::{RunConfig, SEED_ENV};
use yoctoforce_cli::output::Output;

#[derive(Debug, Parser)]
#[command(name = "yoctoforce", version, about = "Simulate and analyze quantum-limited optomechanical force sensing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML configuration file; built-in reference parameters when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// RNG seed, overriding the config file and YF_SEED.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding output.dir.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Skip SVG plots.
    #[arg(long, global = true)]
    no_plots: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Closed-form sensitivity curves versus cooperativity.
    Theory,
    /// Synthesize, fit and analyze across a cooperativity sweep.
    Sweep,
    /// Phase-space ensembles and force-noise spectra.
    Phase,
    /// Run the invariant suite; exits nonzero on any failure.
    Validate,
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let env = std::env::var(SEED_ENV).ok();
    let seed = cfg.resolve_seed(cli.seed, env.as_deref())?;
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    let out = Output::new(&dir, cfg.output.plots && !cli.no_plots)?;
    log::info!("seed {seed}, output in {}", dir.display());

    let ok = match cli.command {
        Command::Theory => {
            cmd_theory(&cfg, seed, &out)?;
            true
        }
        Command::Sweep => {
            let sweep = cmd_sweep(&cfg, seed, &out)?;
            let failures = sweep.failures();
            if failures > 0 {
                eprintln!("{failures} sweep point(s) failed");
            }
            failures == 0
        }
        Command::Phase => {
            cmd_phase(&cfg, seed, &out).context("phase run")?;
            true
        }
        Command::Validate => {
            let checks = cmd_validate(&cfg, seed, &out)?;
            let failed = checks.iter().filter(|c| !c.passed).count();
            println!("{} of {} checks passed", checks.len() - failed, checks.len());
            failed == 0
        }
    };
    Ok(ok)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
