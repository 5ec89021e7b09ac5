use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use regex::Regex;

use velmat::cli::{
    cmd_analyze, cmd_distance, cmd_simulate, cmd_verify, CliError, DistanceMode, Fault, Scenario, VerifyOptions,
    DEFAULT_SEED,
};

#[derive(Parser)]
#[command(name = "velmat", version, about = "Velocity-matrix completeness analysis for symmetric hyperbolic systems")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Geodesic,
    Arrival,
}

#[derive(Clone, Copy, ValueEnum)]
enum InjectFault {
    Majorant,
}

#[derive(Subcommand)]
enum Command {
    /// Build the velocity field and grade completeness toward every boundary piece.
    Analyze {
        scenario: PathBuf,
        /// Exit with code 4 when the verdict is inconclusive.
        #[arg(long)]
        strict: bool,
    },
    /// Distance field from the probe point.
    Distance {
        scenario: PathBuf,
        #[arg(long, value_enum, default_value = "geodesic")]
        mode: Mode,
    },
    /// Evolve the scenario's Gaussian pulse.
    Simulate { scenario: PathBuf },
    /// Run the randomized invariant suite.
    Verify {
        /// Only run invariants whose id matches this regular expression.
        #[arg(long)]
        filter: Option<String>,
        /// Exit with code 4 when the filter selects nothing.
        #[arg(long)]
        strict: bool,
        #[arg(long, default_value_t = DEFAULT_SEED, value_parser = parse_seed)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, value_enum, hide = true)]
        inject_fault: Option<InjectFault>,
    },
}

fn parse_seed(s: &str) -> Result<u64, String> {
    match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => s.parse(),
    }
    .map_err(|e| e.to_string())
}

fn load(path: &PathBuf) -> Result<Scenario, CliError> {
    Scenario::load(path)
}

fn run(args: Args) -> Result<String, CliError> {
    match args.command {
        Command::Analyze { scenario, strict } => {
            let s = load(&scenario)?;
            let r = cmd_analyze(&s, strict).map_err(|e| e.context(&scenario.display().to_string()))?;
            Ok(r.summary)
        }
        Command::Distance { scenario, mode } => {
            let s = load(&scenario)?;
            let mode = match mode {
                Mode::Geodesic => DistanceMode::Geodesic,
                Mode::Arrival => DistanceMode::Arrival,
            };
            cmd_distance(&s, mode).map_err(|e| e.context(&scenario.display().to_string()))?;
            Ok(format!("wrote {}\n", s.output.dir.join(velmat::cli::DISTANCE_CSV).display()))
        }
        Command::Simulate { scenario } => {
            let s = load(&scenario)?;
            let r = cmd_simulate(&s).map_err(|e| e.context(&scenario.display().to_string()))?;
            Ok(r.summary)
        }
        Command::Verify { filter, strict, seed, samples, inject_fault } => {
            let filter = match filter {
                Some(f) => Some(Regex::new(&f).map_err(|e| CliError::Scenario(format!("--filter: {e}")))?),
                None => None,
            };
            let opts = VerifyOptions {
                filter,
                seed,
                fault: inject_fault.map(|InjectFault::Majorant| Fault::MajorantScale),
                samples,
            };
            cmd_verify(&opts, strict, std::io::stdout().lock())?;
            Ok(String::new())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Args::parse()) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
