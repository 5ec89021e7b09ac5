//! Command layer: scenario ingestion, the four commands and report files.
//!
//! Every command writes under the scenario's `output.dir` with fixed file
//! names. Errors carry an exit code: 2 for scenario and parse problems, 3 for
//! numerical failures, 4 for an inconclusive verdict under `--strict`.

mod analyze;
mod run;
mod scenario;
mod verify;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

pub use analyze::{analyze, cmd_analyze, AnalysisReport, Piece};
pub use run::{cmd_distance, cmd_simulate, distance, simulate, DistanceMode, SimulationReport};
pub use scenario::{AnalysisSection, Criterion, DomainSection, GridSection, OutputSection, Pulse, Scenario, SimulateSection, SystemSection, Unbounded};
pub use verify::{
    cmd_verify, random_anisotropic_medium, random_hermitian, random_matrix, random_point, random_spd, random_system,
    random_unit, run_checks, CheckResult, Fault, VerifyOptions, CHECK_IDS,
};

pub const DEFAULT_SEED: u64 = 0x5eed;

pub const VELOCITY_CSV: &str = "velocity.csv";
pub const VERDICT_JSON: &str = "verdict.json";
pub const DISTANCE_CSV: &str = "distance.csv";
pub const EVOLUTION_CSV: &str = "evolution.csv";
pub const SUMMARY_TXT: &str = "summary.txt";
/// Final state of a `simulate` run.
pub const SNAPSHOT_CSV: &str = "snapshot.csv";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("scenario: {0}")]
    Scenario(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("verdict inconclusive: {0}")]
    Inconclusive(String),
    #[error("verification failed: {0}")]
    Failed(String),
    #[error("output: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Scenario(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Inconclusive(_) => 4,
            CliError::Failed(_) | CliError::Io(_) => 1,
        }
    }

    /// Prefix the message with a location such as the scenario path.
    pub fn context(self, at: &str) -> Self {
        match self {
            CliError::Scenario(m) => CliError::Scenario(format!("{at}: {m}")),
            CliError::Numerical(m) => CliError::Numerical(format!("{at}: {m}")),
            CliError::Inconclusive(m) => CliError::Inconclusive(format!("{at}: {m}")),
            CliError::Failed(m) => CliError::Failed(format!("{at}: {m}")),
            CliError::Io(m) => CliError::Io(format!("{at}: {m}")),
        }
    }
}

pub(crate) fn numerical(e: impl std::fmt::Display) -> CliError {
    CliError::Numerical(e.to_string())
}

/// Create the output directory and open `name` inside it for writing.
pub(crate) fn create(dir: &Path, name: &str) -> Result<(PathBuf, BufWriter<File>), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    let f = File::create(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok((path, BufWriter::new(f)))
}

pub(crate) fn write_file(dir: &Path, name: &str, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<PathBuf, CliError> {
    let (path, mut w) = create(dir, name)?;
    body(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(path)
}
