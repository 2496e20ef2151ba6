use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use wgqed_cli::config::Experiment;
use wgqed_cli::error::CliError;
use wgqed_cli::{run, RunRequest};

#[derive(Parser)]
#[command(name = "wgqed", version, about = "Waveguide QED scattering experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Driven two-level emitter: photocounts versus pulse area.
    Tls(Common),
    /// Pumped pair source: photocounts, purity and Schmidt number versus pump width.
    Pair(Common),
    /// Monte Carlo photodetection trajectories.
    Trajectories(Common),
    /// Amplitude convergence in the time step.
    Convergence(Common),
}

#[derive(Args)]
struct Common {
    /// TOML experiment config.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set grid.dt=0.005`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (defaults to `output.dir`).
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Worker threads for parallel sections.
    #[arg(long)]
    threads: Option<usize>,
    /// Random seed (overrides `seed`).
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (experiment, common) = match cli.command {
        Command::Tls(c) => (Experiment::Tls, c),
        Command::Pair(c) => (Experiment::Pair, c),
        Command::Trajectories(c) => (Experiment::Trajectories, c),
        Command::Convergence(c) => (Experiment::Convergence, c),
    };
    if let Some(n) = common.threads {
        if n == 0 {
            eprintln!("error: --threads: must be >= 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: --threads: {e}");
            return ExitCode::from(1);
        }
    }
    let req = RunRequest {
        experiment,
        config: common.config,
        overrides: common.overrides,
        out: common.out,
        seed: common.seed,
    };
    match run(&req) {
        Ok(dir) => {
            println!("wrote {}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, CliError::Diagnostic(_)) {
                eprintln!("results were written; rerun with a larger truncation to clear the diagnostic");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
