use std::io;
use std::path::PathBuf;

use thiserror::Error;
use uptodate_core::scenario::ScenarioError;
use uptodate_core::ScenarioId;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("cannot read {}: {source}", path.display())]
    Read { path: PathBuf, source: io::Error },

    #[error("cannot write {}: {source}", path.display())]
    Write { path: PathBuf, source: io::Error },

    #[error("{}:{line}: corrupt result record: {message}", path.display())]
    CorruptResultsFile { path: PathBuf, line: usize, message: String },

    #[error("{} contains no result records", path.display())]
    EmptyResults { path: PathBuf },

    #[error("invalid config {}: {message}", path.display())]
    Config { path: PathBuf, message: String },

    #[error("invalid experiment: {0}")]
    InvalidExperiment(String),

    #[error(
        "{}:{line}: round {round} has seed {found} but this experiment derives {expected}",
        path.display()
    )]
    SeedMismatch { path: PathBuf, line: usize, round: u32, found: u64, expected: u64 },

    #[error("records mix scenarios `{expected}` and `{found}`")]
    MixedScenarios { expected: ScenarioId, found: ScenarioId },

    #[error("{scenario} results contain unknown method `{method}`")]
    UnknownRecordMethod { scenario: ScenarioId, method: String },

    #[error("cell {scenario}/{method} round {round}: {source}")]
    Scenario { scenario: ScenarioId, method: String, round: u32, source: ScenarioError },
}

impl HarnessError {
    /// Process exit code: 2 for input problems, 3 for scenario failures,
    /// 4 when output cannot be written.
    pub fn exit_code(&self) -> u8 {
        match self {
            HarnessError::Scenario { .. } => 3,
            HarnessError::Write { .. } => 4,
            _ => 2,
        }
    }
}
