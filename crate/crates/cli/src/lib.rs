//! Pipeline driver behind the `issue-mirror` binary.

pub mod config;
pub mod pipeline;

use std::path::PathBuf;

use thiserror::Error;

use mirror_core::gymrun::GymError;
use mirror_core::ingest::IngestError;
use mirror_core::lm::LmError;
use mirror_core::mirror::MirrorError;
use mirror_core::model::RecordError;
use mirror_core::patchkit::PatchError;
use mirror_core::traj::TrajError;

pub use config::PipelineConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("missing input: {}", .0.display())]
    MissingInput(PathBuf),
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Mirror(#[from] MirrorError),
    #[error(transparent)]
    Gym(#[from] GymError),
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error(transparent)]
    Patch(#[from] PatchError),
    #[error(transparent)]
    Traj(#[from] TrajError),
    #[error("io error at {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    /// 2 when an upstream artifact is missing, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::MissingInput(_) => 2,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}
