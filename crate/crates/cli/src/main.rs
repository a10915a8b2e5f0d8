use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qmagsim::calibration_json;
use qmagsim::{run_scenario, CliError, OutputDir, Overrides, Scenario, ScenarioConfig, TableSource};
use qmagsim_core::faraday::EMBEDDED_SLOPE_TABLE;

/// Faraday-rotation magnetometer simulator with squeezed-light probing.
#[derive(Parser)]
#[command(name = "qmagsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its CSV, SVG and manifest outputs.
    Run {
        scenario: String,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (defaults to the number of CPUs).
        #[arg(long)]
        jobs: Option<usize>,
        /// Output directory (default: out/<scenario>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override a config value, e.g. `--set acq.duration_s=50`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Fit the noise scale to the reference sensitivity and print it as JSON.
    Calibrate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// List the available scenarios.
    ListScenarios,
}

fn slope_table() -> Result<TableSource, CliError> {
    match std::env::var_os("QMAGSIM_DATA") {
        Some(path) => {
            let bytes = std::fs::read(&path).map_err(|e| {
                CliError::Io(format!("cannot read slope table {}: {e}", PathBuf::from(&path).display()))
            })?;
            TableSource::from_bytes(&bytes)
        }
        None => TableSource::from_bytes(EMBEDDED_SLOPE_TABLE.as_bytes()),
    }
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::ListScenarios => {
            for s in Scenario::ALL {
                println!("{:<8} {}", s.id(), s.description());
            }
            Ok(())
        }
        Command::Run { scenario, config, seed, jobs, out, set } => {
            let scenario: Scenario = scenario.parse()?;
            let overrides = Overrides { scenario: Some(scenario), seed, set, ..Overrides::default() };
            let cfg = ScenarioConfig::from_path(&config, &overrides)?;
            let jobs = match jobs {
                Some(0) => return Err(CliError::Config("--jobs must be at least 1".into())),
                Some(n) => n,
                None => std::thread::available_parallelism().map_or(1, |n| n.get()),
            };
            let source = slope_table()?;
            let out = OutputDir::create(out.unwrap_or_else(|| PathBuf::from("out").join(scenario.id())))?;
            let manifest = run_scenario(&cfg, &source, &out, jobs)?;
            eprintln!("wrote {} files to {}", manifest.files.len() + 1, out.path().display());
            Ok(())
        }
        Command::Calibrate { config, seed, set } => {
            let overrides = Overrides { fallback_scenario: Some(Scenario::Fig5a), seed, set, ..Overrides::default() };
            let cfg = ScenarioConfig::from_path(&config, &overrides)?;
            let source = slope_table()?;
            println!("{}", calibration_json(&cfg, &source)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or_default();
            let err = CliError::Config(first.trim_start_matches("error: ").to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
