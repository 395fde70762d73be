mod commands;
mod output;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Parser, Subcommand};

use uavflow::Preset;

#[derive(Debug, Parser)]
#[command(name = "uavflow", version, about = "UAV swarm traffic forecasting, simulation and replay")]
pub struct Cli {
    /// Override the scenario seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Emit JSON instead of a table.
    #[arg(long, global = true, conflicts_with = "csv")]
    pub json: bool,
    /// Emit CSV instead of a table.
    #[arg(long, global = true)]
    pub csv: bool,
    /// Directory for artifacts and the run manifest.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads for simulation. Does not change results.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form traffic forecast for a scenario.
    Forecast { scenario: PathBuf },
    /// Generate a packet trace and its summary.
    Simulate { scenario: PathBuf, trace: PathBuf },
    /// Compare a simulated summary against the forecast.
    Compare { scenario: PathBuf, summary: PathBuf },
    /// Send a trace over UDP.
    #[command(group(ArgGroup::new("pace").required(true).args(["speedup", "as_fast_as_possible"])))]
    Replay {
        trace: PathBuf,
        #[arg(long)]
        target: SocketAddr,
        #[arg(long)]
        speedup: Option<f64>,
        #[arg(long)]
        as_fast_as_possible: bool,
        /// Abort when replay stays this far behind schedule.
        #[arg(long, default_value_t = 100)]
        max_lateness_ms: u64,
        /// One sender per subgroup.
        #[arg(long)]
        shard: bool,
    },
    /// Receive replayed datagrams and report per-segment totals.
    Sink {
        #[arg(long)]
        bind: SocketAddr,
        /// Seconds to listen.
        #[arg(long)]
        duration: f64,
    },
    /// Print or write a built-in scenario.
    Preset { which: Preset },
}

/// Failures, split by exit status.
#[derive(Debug)]
pub enum CliError {
    /// Bad input: exit 2.
    Invalid(Vec<String>),
    /// Anything else: exit 3.
    Runtime(String),
}

impl CliError {
    pub fn invalid(msg: impl ToString) -> Self {
        Self::Invalid(vec![msg.to_string()])
    }

    pub fn runtime(msg: impl ToString) -> Self {
        Self::Runtime(msg.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Invalid(msgs)) => {
            eprintln!("error: invalid input");
            for m in msgs {
                eprintln!("  - {m}");
            }
            ExitCode::from(2)
        }
        Err(CliError::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}
