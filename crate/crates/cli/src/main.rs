use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mmc_core::{Algorithm, DcModel};
use mmc_hvdc::config::{parse_config_with, Overrides, Profile};
use mmc_hvdc::run::{execute, print_summary};

#[derive(Parser)]
#[command(name = "mmc-hvdc", version, about = "MMC-HVDC modulation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write time series and metrics.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        algorithm: Option<Algorithm>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        /// Simulated time in seconds.
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long, value_enum)]
        profile: Option<Profile>,
        #[arg(long)]
        dc_model: Option<DcModel>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            algorithm,
            out_dir,
            duration,
            profile,
            dc_model,
        } => {
            let overrides = Overrides {
                profile,
                algorithm,
                duration,
                dc_model,
            };
            let run_config = match parse_config_with(config.as_deref(), &overrides) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            match execute(&run_config, &out_dir) {
                Ok(outcome) => {
                    print_summary(&run_config, &outcome);
                    println!("outputs written to {}", out_dir.display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e:#}");
                    ExitCode::FAILURE
                }
            }
        }
    }
}
