use std::io;
use std::path::PathBuf;

use nanoloc_core::arch::ArchError;
use nanoloc_core::metrics::MetricsError;
use nanoloc_core::planner::PlanError;
use nanoloc_core::quant::QuantError;
use nanoloc_core::sim::SimError;
use nanoloc_core::vision::VisionError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: byte {offset}: {reason}", path.display())]
    Format {
        path: PathBuf,
        offset: u64,
        reason: String,
    },
    #[error("{}:{line}: {reason}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("{}: {reason}", path.display())]
    Config { path: PathBuf, reason: String },
    #[error("{0}")]
    Usage(String),
    #[error("episode aborted: {0}")]
    Aborted(String),
    #[error(transparent)]
    Arch(#[from] ArchError),
    #[error(transparent)]
    Quant(#[from] QuantError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Vision(#[from] VisionError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> Error {
        let path = path.into();
        move |source| Error::Io { path, source }
    }

    /// 2 for malformed invocations and inputs, 1 for failures of the work itself.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Format { .. } | Error::Parse { .. } | Error::Config { .. } | Error::Usage(_) => {
                2
            }
            Error::Arch(ArchError::UnknownNetwork(_)) => 2,
            _ => 1,
        }
    }
}
