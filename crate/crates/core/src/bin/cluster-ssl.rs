use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cluster_ssl::experiment::{run_file, validate_file, RunOptions};

#[derive(Parser)]
#[command(version, about = "Semi-supervised training with a clustering module")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every run of a spec and write its artifacts.
    Run {
        spec: PathBuf,
        /// Parallel runs (0 = one per core).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Output directory, overriding `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a spec and list every problem without running it.
    Validate { spec: PathBuf },
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { spec, jobs, out } => match run_file(&spec, &RunOptions { jobs, out }) {
            Ok(runs) => {
                for r in &runs {
                    println!(
                        "{}  final_test_acc={:.4}  best_val_acc={:.4}",
                        r.point.name(),
                        r.final_test_acc,
                        r.best_val_acc
                    );
                }
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(e.exit_code() as u8)
            }
        },
        Command::Validate { spec } => match validate_file(&spec) {
            Ok(v) if v.is_empty() => {
                println!("{}: ok", spec.display());
                ExitCode::SUCCESS
            }
            Ok(v) => {
                for item in &v {
                    eprintln!("{}: {item}", spec.display());
                }
                ExitCode::from(2)
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
    }
}
