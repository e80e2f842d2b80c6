use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod svg;

use commands::{CliError, Output};

/// Small-time exit asymptotics of diffusion bridges.
#[derive(Parser)]
#[command(name = "ldbridge", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output.dir`; default `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for boundary scans and Monte Carlo.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    /// Monte Carlo seed (overrides `mc.seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Distance between the endpoints, closed form and numeric.
    Distance,
    /// Discrete geodesic between the endpoints.
    Geodesic,
    /// Exit exponent, optimal crossing and frozen-coefficient comparison.
    Exit,
    /// Monte Carlo exit probabilities and the empirical exponent.
    Mc,
    /// SVG of the true and frozen minimizers.
    Figure,
}

fn run(cli: &Cli) -> Result<Output, CliError> {
    let path = cli.config.as_ref().ok_or_else(|| config::ConfigError {
        line: None,
        message: "--config is required".into(),
    })?;
    let mut cfg = config::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.mc.seed = seed;
    }
    let workers = cli.workers.max(1);
    let out = match cli.command {
        Command::Distance => commands::distance(&cfg)?,
        Command::Geodesic => commands::geodesic(&cfg)?,
        Command::Exit => commands::exit_cmd(&cfg, workers)?,
        Command::Mc => commands::mc(&cfg, workers)?,
        Command::Figure => commands::figure(&cfg, workers)?,
    };
    let dir = cli
        .out
        .clone()
        .or(cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&dir)?;
    for (name, contents) in &out.files {
        std::fs::write(dir.join(name), contents)?;
    }
    Ok(out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(out) => {
            print!("{}", out.stdout);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("ldbridge: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
