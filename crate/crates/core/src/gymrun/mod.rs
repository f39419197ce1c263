//! Running a gym's suite in the three patch states and parsing the logs.

mod exec;
mod fake;
mod parse;
mod run;
mod status;

use thiserror::Error;

use crate::patchkit::PatchError;

pub use exec::{DockerExecutor, ExecOutput, ExecRequest, ExecutionPort, ProcessExecutor, GRACE};
pub use fake::{CannedRun, FakeGymExecutor};
pub use parse::{parse_log, ParsedLog};
pub use run::{run_state, run_three_logs, LogState, StateRun, ThreeLogs};
pub use status::{RunMeta, StatusMap};

#[derive(Debug, Clone, Error)]
pub enum GymError {
    #[error("log parser anomaly: {reason}")]
    ParserAnomaly {
        reason: String,
        raw_log: String,
        meta: RunMeta,
    },
    #[error("patch #{index} does not apply: {source}")]
    Apply { index: usize, source: PatchError },
    #[error("sanity failure in state {state}: {source}")]
    SanityFailure { state: u8, source: PatchError },
    #[error("execution failed: {0}")]
    Exec(String),
    #[error("io error: {0}")]
    Io(String),
}

impl GymError {
    pub(crate) fn anomaly(reason: impl Into<String>) -> Self {
        GymError::ParserAnomaly {
            reason: reason.into(),
            raw_log: String::new(),
            meta: RunMeta::default(),
        }
    }
}
