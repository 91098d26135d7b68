//! `holovr` command-line driver: runs one experiment suite and writes its
//! CSV files and plot script to the output directory.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use holovr_core::harness::{run_suite, ScenarioConfig, WORKERS_ENV};

#[derive(Parser)]
#[command(name = "holovr", version, about = "Holographic VR streaming simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Homogeneous-user caching and computing sweeps.
    Homo(RunArgs),
    /// Heterogeneous path-selection sweeps (H1/H2/H3).
    Hetero(RunArgs),
    /// Holographic beamforming SNR sweep.
    Beamform(RunArgs),
    /// Two-timescale run with user mobility.
    E2e(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML scenario file; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the seed from the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let (suite, args) = match cli.cmd {
        Command::Homo(a) => ("homo_sweeps", a),
        Command::Hetero(a) => ("hetero_sweeps", a),
        Command::Beamform(a) => ("beamform_sweeps", a),
        Command::E2e(a) => ("e2e", a),
    };
    let mut cfg = match &args.config {
        Some(p) => ScenarioConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => ScenarioConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    log::info!(
        "running {suite} with seed {} ({}={})",
        cfg.seed,
        WORKERS_ENV,
        std::env::var(WORKERS_ENV).unwrap_or_else(|_| "auto".into())
    );
    let res = run_suite(suite, &cfg, &args.out).with_context(|| format!("suite {suite}"))?;
    for f in &res.files {
        println!("wrote {}", f.display());
    }
    for a in &res.audits {
        println!("audit {:<24} {}  {}", a.name, if a.passed { "PASS" } else { "FAIL" }, a.detail);
    }
    Ok(res.all_passed())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
