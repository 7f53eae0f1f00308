use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use se23nav_harness::runner::{replay_logs, run_scenario, simulate_run, write_runs, RunResult};
use se23nav_harness::scenario::Scenario;
use se23nav_harness::summary::{summarize, write_summary};
use se23nav_harness::verify;

#[derive(Parser)]
#[command(name = "se23nav", about = "INS/GPS and INS/odometer filter experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated subset of lse, rse, so.
    #[arg(long, value_delimiter = ',')]
    filters: Option<Vec<String>>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo simulation of a scenario.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Also write the IMU, aiding and reference logs of run 0.
        #[arg(long)]
        export_logs: bool,
    },
    /// Run the filters over recorded logs.
    Replay {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        imu: PathBuf,
        /// GPS or odometer log, matching the scenario's aiding.
        #[arg(long)]
        aiding: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
    },
    /// Model checks: group-affine dynamics, log-linearity, Lie maps, Jacobians.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load(c: &Common) -> Result<Scenario, String> {
    let mut s = Scenario::load(&c.scenario).map_err(|e| e.to_string())?;
    if let Some(r) = c.runs {
        s.runs = r;
    }
    if let Some(seed) = c.seed {
        s.seed = seed;
    }
    if let Some(f) = &c.filters {
        s.filters = f.clone();
    }
    s.validate().map_err(|e| e.to_string())?;
    Ok(s)
}

fn write(out: &Path, s: &Scenario, results: &[RunResult]) -> Result<(), String> {
    std::fs::create_dir_all(out).map_err(|e| format!("{}: {e}", out.display()))?;
    write_runs(out, results).map_err(|e| e.to_string())?;
    write_summary(out, &summarize(results, &s.definitions())).map_err(|e| e.to_string())
}

fn execute(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::Simulate { common, export_logs } => {
            let s = load(&common)?;
            let mut results = Vec::with_capacity(s.runs);
            if export_logs {
                let dir = common.out.join("logs");
                std::fs::create_dir_all(&dir).map_err(|e| format!("{}: {e}", dir.display()))?;
                results.push(simulate_run(&s, 0, Some(&dir)).map_err(|e| e.to_string())?);
                let rest = Scenario { runs: s.runs - 1, seed: s.seed.wrapping_add(1), ..s.clone() };
                if rest.runs > 0 {
                    for mut r in run_scenario(&rest).map_err(|e| e.to_string())? {
                        r.run += 1;
                        results.push(r);
                    }
                }
            } else {
                results = run_scenario(&s).map_err(|e| e.to_string())?;
            }
            write(&common.out, &s, &results)
        }
        Command::Replay { common, imu, aiding, reference } => {
            let s = load(&common)?;
            let result = replay_logs(&s, &imu, &aiding, &reference).map_err(|e| e.to_string())?;
            write(&common.out, &s, &[result])
        }
        Command::Verify { seed } => {
            let report = verify::run_all(seed);
            let mut out = std::io::stdout().lock();
            for line in &report {
                if writeln!(out, "{line}").is_err() {
                    break;
                }
            }
            if report.iter().all(|c| c.pass) {
                Ok(())
            } else {
                Err("verification failed".into())
            }
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
