use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use thinfilm_cli::{execute, Command, Options};

/// Thin-film equation simulator and waiting-time diagnostics.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// TOML configuration, or a manifest.json to replay.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps (0 = all cores).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Seed of the randomized inequality corpus.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let opts = Options {
        config: cli.config,
        out: cli.out,
        workers: cli.workers,
        seed: cli.seed,
    };
    let outcome = execute(cli.command, &opts);
    for e in &outcome.errors {
        eprintln!("error [{}]: {}", e.kind, e.message);
    }
    if outcome.code == 0 {
        println!("{}: ok, outputs in {}", cli.command.name(), outcome.out_dir.display());
    }
    ExitCode::from(outcome.code as u8)
}
