use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod error;

use error::CliError;

/// Molecule propagation and reception in linear branched vessel networks.
#[derive(Debug, Parser)]
#[command(name = "lbvn", version)]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the full channel and receiver chain for one network.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(short, long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Repeat a simulation over values of one parameter.
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// One of Q, alpha, beta, N, length.
        #[arg(short, long)]
        param: String,
        /// Comma-separated values; Q and length accept unit suffixes
        /// (e.g. 5mL/min, 3cm).
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(short, long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Place every network of a list in dispersion space.
    Dispersion {
        /// Network list file.
        list: PathBuf,
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(short, long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Compare particle tracking with the analytic outlet flux.
    Montecarlo {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(short = 'n', long, default_value_t = 100_000)]
        particles: usize,
        /// Walk step; accepts time units (e.g. 2ms).
        #[arg(long)]
        dt: Option<String>,
        /// Analytic grid samples per histogram bin.
        #[arg(long, default_value_t = 5)]
        samples_per_bin: usize,
        #[arg(short, long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Parse and validate network, network-list or scenario files.
    Validate {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Write the 28-network dispersion family and its list file.
    Family {
        #[arg(short, long, default_value = "family")]
        out_dir: PathBuf,
    },
}

/// Scenario file plus command-line overrides.
#[derive(Debug, Args)]
struct ScenarioArgs {
    /// Scenario file; defaults apply when omitted.
    #[arg(short, long)]
    scenario: Option<PathBuf>,
    /// Network file, overriding the scenario's.
    #[arg(long)]
    network: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Disable receiver noise.
    #[arg(long)]
    no_noise: bool,
    /// Inlet flow rate, e.g. 10mL/min or 1.6e-7.
    #[arg(long)]
    flow_rate: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Injected molecule count.
    #[arg(long)]
    molecules: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result: Result<(), CliError> = match cli.command {
        Command::Simulate { scenario, out_dir } => commands::simulate(&scenario, &out_dir),
        Command::Sweep {
            scenario,
            param,
            values,
            out_dir,
        } => commands::sweep(&scenario, &param, &values, &out_dir),
        Command::Dispersion {
            list,
            scenario,
            out_dir,
        } => commands::dispersion(&list, &scenario, &out_dir),
        Command::Montecarlo {
            scenario,
            particles,
            dt,
            samples_per_bin,
            out_dir,
        } => commands::montecarlo(&scenario, particles, dt.as_deref(), samples_per_bin, &out_dir),
        Command::Validate { files } => commands::validate(&files),
        Command::Family { out_dir } => commands::family(&out_dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
