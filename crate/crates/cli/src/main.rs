use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, ValueEnum};
use mpctune_core::app::{self, Command, RunOptions, OUT_DIR_ENV};
use mpctune_core::config::ExperimentConfig;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    /// Bayesian-optimization tuning of the NARX model and backoff
    Tune,
    /// Open-loop PRBS identification baseline
    Baseline,
    /// Monte-Carlo assessment of a fixed theta
    Assess,
    /// Single closed-loop trajectory for a fixed theta
    Simulate,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Tune => Command::Tune,
            Cmd::Baseline => Command::Baseline,
            Cmd::Assess => Command::Assess,
            Cmd::Simulate => Command::Simulate,
        }
    }
}

/// Closed-loop MPC auto-tuning on the CSTR benchmark.
#[derive(Debug, Parser)]
#[command(name = "mpctune", version)]
struct Cli {
    command: Cmd,
    /// Experiment config (JSON)
    #[arg(long)]
    config: PathBuf,
    /// Theta file, required by `assess` and `simulate`
    #[arg(long)]
    theta: Option<PathBuf>,
    /// Output directory (default: config `output_dir`, then $MPCTUNE_OUT_DIR, then ./mpctune-out)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated seeds overriding the config
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Write per-replicate trajectory CSVs
    #[arg(long)]
    dump_trajectories: bool,
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let config = ExperimentConfig::load(&cli.config)?;
    eprintln!(
        "note: feed concentration cA0 = {} mol/L and V_in = {} L are assumptions, not published values",
        config.plant.cA0, config.mpc.vin
    );
    let env_dir = std::env::var(OUT_DIR_ENV).ok();
    let opts = RunOptions {
        out_dir: app::resolve_out_dir(cli.out.as_deref(), &config, env_dir.as_deref()),
        seeds: cli.seeds,
        theta_path: cli.theta,
        dump_trajectories: cli.dump_trajectories,
    };
    let command: Command = cli.command.into();
    let report = app::run_command(command, &config, &opts)
        .with_context(|| format!("{} failed", command.name()))?;
    for s in &report.seeds {
        match &s.result {
            Ok(files) => {
                for f in files {
                    println!("seed {}: wrote {}", s.seed, f.display());
                }
            }
            Err(e) => eprintln!("seed {}: error: {e}", s.seed),
        }
    }
    for f in &report.shared {
        println!("wrote {}", f.display());
    }
    Ok(report.all_ok())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
