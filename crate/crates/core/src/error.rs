use std::path::PathBuf;

use crate::config::ConfigError;
use crate::engines::EngineError;
use crate::power::PowerError;
use crate::sched::SchedError;
use crate::workload::WorkloadError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Sched(#[from] SchedError),
    #[error(transparent)]
    Power(#[from] PowerError),
    #[error("simulation failed: {0}")]
    Sim(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("sweep: {0}")]
    Sweep(String),
}

impl Error {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Config(_) => "E_CONFIG",
            Error::Workload(WorkloadError::Io { .. }) => "E_IO",
            Error::Workload(_) => "E_WORKLOAD",
            Error::Engine(_) => "E_ENGINE",
            Error::Sched(SchedError::Deadlock { .. }) => "E_DEADLOCK",
            Error::Sched(_) => "E_SCHED",
            Error::Power(_) => "E_POWER",
            Error::Sim(_) => "E_SIM",
            Error::Io { .. } => "E_IO",
            Error::Sweep(_) => "E_SWEEP",
        }
    }

    /// Process exit status for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self.code() {
            "E_CONFIG" => 2,
            "E_WORKLOAD" => 3,
            "E_IO" => 4,
            "E_ENGINE" => 5,
            "E_DEADLOCK" => 6,
            "E_SCHED" => 7,
            "E_POWER" => 8,
            "E_SWEEP" => 9,
            _ => 10,
        }
    }
}
