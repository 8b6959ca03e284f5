use std::path::{Path, PathBuf};
use std::process::ExitCode;

use channel_les::config::{parse_config_with_env, Mode, RunConfig};
use channel_les::run::run;
use clap::{Parser, Subcommand};

/// Steady LES of periodic channel flow with a wall law.
///
/// Configuration keys can be overridden with `CHANLES__<section>__<key>`
/// environment variables.
#[derive(Parser)]
#[command(name = "channel-les", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve once and write fields and the solver report.
    Solve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Refinement study of the manufactured solution.
    Study {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        levels: Option<usize>,
    },
    /// Run the invariant suite and print a pass/fail summary.
    Verify {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load(path: &Path) -> Result<RunConfig, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_config_with_env(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (path, mode, levels) = match &cli.command {
        Command::Solve { config } => (config, Mode::Solve, None),
        Command::Study { config, levels } => (config, Mode::Study, *levels),
        Command::Verify { config } => (config, Mode::Verify, None),
    };
    let mut config = match load(path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    config.mode = mode;
    if let Some(k) = levels {
        config.levels = k;
    }
    match run(&config) {
        Ok(outcome) => {
            println!("{}", outcome.summary.trim_end());
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            if outcome.success {
                ExitCode::SUCCESS
            } else {
                eprintln!("{} failed", mode.as_str());
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
