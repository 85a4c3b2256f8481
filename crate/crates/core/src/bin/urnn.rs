//! `urnn <copymem|sysid|capacity|gradcheck> [--config FILE] [--preset paper|desk]
//!       [--seed-data N] [--seed-init N] [--out DIR]`
//!
//! Prints the run summary as JSON. Exit codes: 0 success, 1 configuration
//! error, 2 numeric failure, 3 I/O error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use urnn::train::{run_experiment, ExperimentConfig, Preset, Task};

#[derive(Parser)]
#[command(name = "urnn", version, about = "Train and probe unitary recurrent networks")]
struct Cli {
    #[command(subcommand)]
    task: Command,
    /// TOML file; keys it omits come from the preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value = "desk")]
    preset: String,
    #[arg(long, global = true)]
    seed_data: Option<u64>,
    #[arg(long, global = true)]
    seed_init: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Copy-memory task.
    Copymem,
    /// System identification of a random unitary RNN.
    Sysid,
    /// How well the restricted parameterization fits given unitaries.
    Capacity,
    /// Finite-difference check of the analytic gradients.
    Gradcheck,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("urnn: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> urnn::Result<()> {
    let task = match cli.task {
        Command::Copymem => Task::Copymem,
        Command::Sysid => Task::Sysid,
        Command::Capacity => Task::Capacity,
        Command::Gradcheck => Task::Gradcheck,
    };
    let preset: Preset = cli.preset.parse()?;
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path, task, preset)?,
        None => ExperimentConfig::preset(task, preset),
    };
    if let Some(s) = cli.seed_data {
        config.seeds.data = s;
    }
    if let Some(s) = cli.seed_init {
        config.seeds.init = s;
    }
    if let Some(out) = cli.out {
        config.output.dir = out;
    }
    let summary = run_experiment(&config)?;
    println!("{}", summary.to_json());
    Ok(())
}
