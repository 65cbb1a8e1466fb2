use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use crossdiff_core::scenario::{exit_status_for, load_scenario, run_scenario, ExitStatus};

/// Run a cross-diffusion scenario file.
///
/// Exit codes: 0 finished, 2 blow-up detected, 3 stability floor,
/// 4 numerical failure, 5 configuration error, 6 I/O error, 7 wall-clock limit.
#[derive(Parser, Debug)]
#[command(name = "crossdiff", version)]
struct Cli {
    /// Scenario file.
    scenario: PathBuf,
    /// Output directory (overrides `[scenario] output`).
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Seed (overrides `[scenario] seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Wall-clock limit per run or sweep child, in seconds.
    #[arg(long)]
    max_wall: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let status = match execute(&cli) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("crossdiff: {e}");
            exit_status_for(&e)
        }
    };
    ExitCode::from(status.code() as u8)
}

fn execute(cli: &Cli) -> crossdiff_core::Result<ExitStatus> {
    let mut cfg = load_scenario(&cli.scenario)?;
    if let Some(o) = &cli.output {
        cfg.output = o.clone();
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.max_wall {
        if !(w > 0.0) {
            return Err(crossdiff_core::Error::Config("--max-wall must be positive".into()));
        }
        cfg.max_wall = Some(w);
    }
    let outcome = run_scenario(&cfg)?;
    match &outcome.sweep {
        Some(table) => print!("{}", table.to_text()),
        None => print!("{}", outcome.summary.to_text()),
    }
    Ok(outcome.exit)
}
