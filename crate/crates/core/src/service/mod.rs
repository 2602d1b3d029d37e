//! Ship-side mission service: the mission core, the operator protocol, a
//! scripted headless operator and a TCP front end.

pub mod fixtures;
pub mod harness;
pub mod mission;
pub mod protocol;
pub mod serve;

use thiserror::Error;

use crate::link::ProfileError;
use crate::scene::SceneError;
use crate::sim::WorksiteError;

pub use harness::{run_script, MetricsReport, MissionScript, RunOutput, ScriptStep, TaskMetrics};
pub use mission::{replay, MissionConfig, MissionCore, OperatorSession, ReplayReport};
pub use protocol::{ClientMessage, Downlink, ProtocolError, Role, ServerMessage, StatusReport};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("operator '{0}' is already connected")]
    DuplicateOperator(String),
    #[error("operator '{0}' is not connected")]
    UnknownOperator(String),
    #[error(transparent)]
    Worksite(#[from] WorksiteError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error("corrupt log at record {index}: {reason}")]
    CorruptLog { index: usize, reason: String },
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error("mission script: {0}")]
    Script(String),
}

impl From<crate::executive::LogError> for ServiceError {
    fn from(e: crate::executive::LogError) -> Self {
        let crate::executive::LogError::CorruptLog { index, reason } = e;
        ServiceError::CorruptLog { index, reason }
    }
}
