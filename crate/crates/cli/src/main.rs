use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gcs_sim_cli::{cmd_check, cmd_run, cmd_sweep, CliError};

#[derive(Parser)]
#[command(name = "gcs-sim", version, about = "Gradient clock synchronisation simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate a scenario and write trace.csv, summary.json and violations.json.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the static bounds of a scenario without simulating.
    Check {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Run a parameter grid over several seeds and write sweep.csv.
    Sweep {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        grid: PathBuf,
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exec(cmd: Cmd) -> Result<(), CliError> {
    match cmd {
        Cmd::Run { scenario, seed, out } => {
            let o = cmd_run(&scenario, seed, &out)?;
            println!(
                "ok: {} cycles, max local {} <= {}, max global {} <= {}",
                o.summary.cycles_completed,
                o.summary.bounds.max_observed_local,
                o.summary.bounds.local_bound,
                o.summary.bounds.max_observed_global,
                o.summary.bounds.global_bound
            );
        }
        Cmd::Check { scenario } => print!("{}", cmd_check(&scenario)?.render()),
        Cmd::Sweep {
            scenario,
            grid,
            seeds,
            out,
        } => {
            let rows = cmd_sweep(&scenario, &grid, seeds, &out)?;
            let failed = rows.iter().filter(|r| r.error.is_some()).count();
            println!("{} rows written, {failed} failed", rows.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GCS_SIM_LOG", "warn")).init();
    match exec(Cli::parse().cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
