use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use dislo_core::harness::{run_from_file, Experiment};

/// Experiments on anisotropic nonlocal dislocation energies.
#[derive(Parser)]
#[command(name = "dislo", version, about)]
struct Cli {
    /// Experiment to run.
    #[arg(value_enum)]
    experiment: Experiment,
    /// Path to the TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for results.json, table.csv and log.txt.
    #[arg(long, default_value = "dislo-out")]
    out: PathBuf,
    /// Override the seed from the configuration file.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run_from_file(cli.experiment, &cli.config, &cli.out, cli.seed) {
        Ok(summary) => {
            match summary.verdict {
                Some(true) => println!("{}: PASS", summary.experiment),
                Some(false) => println!("{}: FAIL", summary.experiment),
                None => println!("{}: done", summary.experiment),
            }
            println!("results: {}", summary.results_path.display());
            if summary.verdict == Some(false) {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
