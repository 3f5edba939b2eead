//! `psinc`: batch front end. Exit status 0 on success, 1 on I/O failure,
//! 2 on invalid input, 3 on numerical failure.

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ps_increments::Error;

#[derive(Parser)]
#[command(name = "psinc", version, about = "Optimal and minimax-robust estimation for sequences with periodically stationary increments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Problem config (TOML, or JSON with a .json extension).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default: `out` or the config's `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Relative quadrature tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Observation window L on each side.
    #[arg(long, global = true)]
    window: Option<usize>,
    /// Synthesis grid size.
    #[arg(long, global = true)]
    grid: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Solve for the optimal estimate; writes solution.json and filter.csv.
    Estimate,
    /// Both error forms; writes mse.json.
    Mse,
    /// Least favorable densities; writes q0.csv, g0.csv and minimax.json.
    Minimax,
    /// Monte Carlo check of the error; writes montecarlo.json and path.csv.
    Simulate,
    /// Projection residuals and oracle; writes verify.json.
    Verify,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => 1,
        e if e.is_numerical() => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Some(config) = cli.config.clone() else {
        eprintln!("error: --config is required");
        return ExitCode::from(2);
    };
    let ov = run::Overrides { out: cli.out, seed: cli.seed, tol: cli.tol, trials: cli.trials, window: cli.window, grid: cli.grid };
    let result = run::Ctx::new(&config, ov).and_then(|ctx| match cli.command {
        Command::Estimate => run::estimate(&ctx),
        Command::Mse => run::mse(&ctx),
        Command::Minimax => run::minimax(&ctx),
        Command::Simulate => run::simulate(&ctx),
        Command::Verify => run::verify(&ctx),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
