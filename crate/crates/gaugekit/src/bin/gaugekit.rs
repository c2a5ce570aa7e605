//! Command-line front end: run scenario files, calibrate smallness constants,
//! and validate specs without running them.
//!
//! Exit codes: 0 when the requested work succeeded (for `run`, when every
//! criterion passed), 1 when a scenario ran to completion but a criterion
//! failed, 2 on malformed input or a pipeline error.
//!
//! The only runtime configuration outside the spec file is the
//! `GAUGEKIT_THREADS` environment variable.  Every pipeline in this toolkit is
//! deterministic and currently single-threaded, so values above 1 are
//! accepted but only acknowledged with a note.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gaugekit::{calibrate, load_spec, parse_grid_preset, run_scenario, validate_spec, write_outcome, GroupId};

#[derive(Parser)]
#[command(name = "gaugekit", version, about = "Discretized principal-bundle toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and write report.json, metrics.csv, timings.json,
    /// and any artifacts into the output directory.
    Run {
        /// Scenario spec file (flat `key = value` text).
        spec: PathBuf,
        /// Output directory; created if missing.
        #[arg(long)]
        out: PathBuf,
    },
    /// Calibrate smallness constants on a grid preset and write the profile.
    Calibrate {
        /// Structure group: u1 or su2.
        #[arg(long)]
        group: String,
        /// Grid preset, e.g. torus2-32.
        #[arg(long)]
        grid: String,
        /// File the calibrated profile is written to.
        #[arg(long)]
        out: PathBuf,
        /// Seed for the calibration probes.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Check a scenario file for schema and consistency errors.
    Validate {
        /// Scenario spec file to check.
        spec: PathBuf,
    },
}

fn thread_note() {
    if let Ok(raw) = std::env::var("GAUGEKIT_THREADS") {
        match raw.parse::<usize>() {
            Ok(0) => eprintln!("note: GAUGEKIT_THREADS=0 ignored, running with 1 thread"),
            Ok(n) if n > 1 => eprintln!(
                "note: GAUGEKIT_THREADS={n} requested, but the pipelines are \
                 deterministic and single-threaded; running with 1 thread"
            ),
            Ok(_) => {}
            Err(_) => eprintln!("note: GAUGEKIT_THREADS={raw:?} is not a number, ignored"),
        }
    }
}

fn run_command(command: Command) -> Result<bool, gaugekit::Error> {
    match command {
        Command::Run { spec, out } => {
            let parsed = load_spec(&spec)?;
            let outcome = run_scenario(&parsed)?;
            let report_path = write_outcome(&outcome, &out)?;
            for stage in &outcome.report.stages {
                let ok = stage.metrics.iter().all(|m| m.pass);
                let label = if ok { "PASS" } else { "FAIL" };
                println!("{label} {}", stage.stage);
                for m in stage.metrics.iter().filter(|m| !m.pass) {
                    println!("     {} = {} violates {} bound {}", m.name, m.value, m.bound, m.tolerance);
                }
            }
            println!(
                "{}: {} stages, report at {}",
                if outcome.report.pass { "PASS" } else { "FAIL" },
                outcome.report.stages.len(),
                report_path.display()
            );
            Ok(outcome.report.pass)
        }
        Command::Calibrate { group, grid, out, seed } => {
            let group = match group.as_str() {
                "u1" => GroupId::U1,
                "su2" => GroupId::Su2,
                other => {
                    return Err(gaugekit::Error::Parse {
                        line: 0,
                        msg: format!("unknown group `{other}` (u1|su2)"),
                    })
                }
            };
            let grid = parse_grid_preset(&grid)?;
            let profile = calibrate(&grid, group, seed)?;
            if let Some(parent) = out.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent)?;
                }
            }
            std::fs::write(&out, profile.to_text())?;
            println!(
                "calibrated eps_elliptic = {}, eps_coulomb = {}, c_coulomb = {}",
                profile.eps_elliptic, profile.eps_coulomb, profile.c_coulomb
            );
            println!("profile written to {}", out.display());
            Ok(true)
        }
        Command::Validate { spec } => {
            let parsed = validate_spec(&spec)?;
            println!("spec OK: {} on {}", parsed.kind.name(), parsed.grid);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    thread_note();
    let cli = Cli::parse();
    match run_command(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
