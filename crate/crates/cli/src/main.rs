use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use renewkit_cli::{load_config, run, Overrides, RunError};

#[derive(Parser)]
#[command(name = "renewkit", version, about = "Run and check renewal-process experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        reps: Option<usize>,
        /// Output directory (default: $RENEWKIT_OUT_DIR, then ./renewkit-out).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Check a config file and print the effective config.
    Validate { config: PathBuf },
}

/// Prints to stdout, ignoring a closed pipe.
fn emit(line: &str) {
    let _ = writeln!(std::io::stdout().lock(), "{line}");
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { config, seed, reps, out, threads } => {
            let result = load_config(&config).map_err(RunError::from).and_then(|mut c| {
                c.apply(&Overrides { seed, reps, out, threads });
                run(&c)
            });
            match result {
                Ok(outcome) => {
                    for line in outcome.lines() {
                        emit(&line);
                    }
                    for path in &outcome.artifacts {
                        eprintln!("wrote {}", path.display());
                    }
                    if outcome.passed() {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(1)
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(e.exit_code())
                }
            }
        }
        Command::Validate { config } => match load_config(&config).and_then(|c| c.validate().map(|_| c)) {
            Ok(c) => {
                emit("ok");
                emit(&serde_json::to_string_pretty(&c.resolved()).expect("configs serialize"));
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
    }
}
