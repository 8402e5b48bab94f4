//! `theta`: run or validate a scenario file.
//!
//! Exit status: 0 when every invariant holds, 1 when one fails or the
//! numerics break down, 2 on a configuration error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use theta_bsde::config::{parse_config, ScenarioConfig};
use theta_bsde::experiments::{run_scenario, RunOptions};
use theta_bsde::output::format_float;
use theta_bsde::Error;

#[derive(Parser)]
#[command(
    name = "theta",
    version,
    about = "Regression Monte Carlo runner for theta-BSDE scenarios"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its artifacts.
    Run {
        config: PathBuf,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Also write the per-path solution as CSV.
        #[arg(long)]
        paths_dump: bool,
        /// Print only the summary line.
        #[arg(long)]
        quiet: bool,
    },
    /// Parse and check a scenario without simulating.
    Validate { config: PathBuf },
}

const CONFIG_ERROR: u8 = 2;
const FAILURE: u8 = 1;

fn load(path: &Path) -> Result<ScenarioConfig, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_config(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn output_name(config: &ScenarioConfig, path: &Path) -> String {
    config.name.clone().unwrap_or_else(|| {
        path.file_stem()
            .map_or_else(|| "scenario".into(), |s| s.to_string_lossy().into_owned())
    })
}

fn run(path: &Path, out: &Path, paths_dump: bool, quiet: bool) -> ExitCode {
    let config = match load(path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(CONFIG_ERROR);
        }
    };
    let name = output_name(&config, path);
    let start = Instant::now();
    let report = match run_scenario(&config, &name, &RunOptions { paths_dump }) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::Configuration(_)
                | Error::InvalidArgument(_)
                | Error::DimensionMismatch { .. } => CONFIG_ERROR,
                _ => FAILURE,
            };
            return ExitCode::from(code);
        }
    };
    let wall = start.elapsed().as_secs_f64();
    let written = match report.write_to(out) {
        Ok(w) => w,
        Err(e) => {
            eprintln!("error: writing to {}: {e}", out.display());
            return ExitCode::from(FAILURE);
        }
    };
    if !quiet {
        for c in &report.checks {
            let status = if c.passed { "PASS" } else { "FAIL" };
            println!(
                "check {} {status} value={} limit={}",
                c.name,
                format_float(c.value),
                format_float(c.limit)
            );
        }
        for p in &written {
            println!("wrote {}", p.display());
        }
    }
    let y0 = report.y0.map_or_else(|| "-".to_string(), format_float);
    let status = if report.passed() {
        "ok"
    } else {
        "invariant_failure"
    };
    println!(
        "kind={} y0={y0} wall_s={wall:.3} seed={} status={status}",
        report.kind, report.seed
    );
    if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(FAILURE)
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run {
            config,
            out,
            paths_dump,
            quiet,
        } => run(&config, &out, paths_dump, quiet),
        Command::Validate { config } => match load(&config) {
            Ok(_) => {
                println!("OK");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(CONFIG_ERROR)
            }
        },
    }
}
