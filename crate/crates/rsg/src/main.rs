use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use rsg::{load_config, run, Command, Outcome};

/// Risk-sensitive ergodic stochastic game solver.
#[derive(Debug, Parser)]
#[command(name = "rsg", version)]
struct Cli {
    command: Command,
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for reports.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured thread count (0 = one per core).
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let mut cfg = match load_config(&cli.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    match run(
        cli.command,
        &cfg,
        &cli.config.display().to_string(),
        &cli.out,
    ) {
        Ok(outcome) => {
            if let Outcome::Negative(reason) = &outcome {
                eprintln!("{}: {reason}", cli.command.name());
            }
            ExitCode::from(outcome.exit_code())
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
