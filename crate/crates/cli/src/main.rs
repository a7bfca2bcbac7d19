//! `hjm`: simulate, price and calibrate the tanh-volatility HJM model.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::SimArgs;

#[derive(Debug, Parser)]
#[command(name = "hjm", version, about = "Splitting-scheme simulation, pricing and calibration of an HJM forward-rate model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct Common {
    /// Write CSV output here instead of standard output.
    #[arg(long, short, global = true, value_name = "FILE")]
    output: Option<PathBuf>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Fill the timing columns; without it they are left empty so that
    /// output is reproducible byte for byte.
    #[arg(long, global = true)]
    timing: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate paths and write curve summaries at observation times.
    Simulate(commands::SimulateArgs),
    /// Weak-error ladder of one or more schemes against a fine reference.
    Converge(commands::ConvergeArgs),
    /// Price payoffs given as descriptors, e.g. payer_swaption:T=5:delta=0.25:I=12:K=atm.
    Price(commands::PriceArgs),
    /// Compare a simulated bond price with the initial curve.
    Martingale(commands::MartingaleArgs),
    /// Fit the volatility parameters to a caplet surface.
    Calibrate(commands::CalibrateArgs),
    /// Step count n and path count K for a target accuracy.
    Budget(commands::BudgetArgs),
    /// Generate a caplet implied-volatility surface from the model itself.
    Surface(commands::SurfaceArgs),
}

impl Command {
    fn sim_args(&self) -> Option<&SimArgs> {
        match self {
            Command::Simulate(a) => Some(&a.sim),
            Command::Converge(a) => Some(&a.sim),
            Command::Price(a) => Some(&a.sim),
            Command::Martingale(a) => Some(&a.sim),
            Command::Calibrate(a) => Some(&a.sim),
            Command::Surface(a) => Some(&a.sim),
            Command::Budget(_) => None,
        }
    }
}

/// Exit status for a failed command: 1 for domain errors in otherwise valid
/// input, 2 for unreadable or inconsistent configuration.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<hjm_core::Error>() {
        Some(hjm_core::Error::Domain(_)) => 1,
        _ if err.downcast_ref::<commands::DomainError>().is_some() => 1,
        _ => 2,
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.common.threads {
        if n == 0 {
            anyhow::bail!("--threads must be positive");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let run_config = match cli.command.sim_args() {
        Some(args) => Some(config::RunConfig::load(args)?),
        None => None,
    };
    let out = commands::Output::new(cli.common.output, cli.common.timing);
    match (&cli.command, run_config) {
        (Command::Simulate(a), Some(rc)) => commands::simulate(a, &rc, &out),
        (Command::Converge(a), Some(rc)) => commands::converge(a, &rc, &out),
        (Command::Price(a), Some(rc)) => commands::price(a, &rc, &out),
        (Command::Martingale(a), Some(rc)) => commands::martingale(a, &rc, &out),
        (Command::Calibrate(a), Some(rc)) => commands::calibrate(a, &rc, &out),
        (Command::Surface(a), Some(rc)) => commands::surface(a, &rc, &out),
        (Command::Budget(a), _) => commands::budget(a, &out),
        _ => unreachable!("every simulating command carries a run configuration"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
