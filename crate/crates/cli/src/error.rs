use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("resource cap exceeded: {requested} samples requested, limit is {cap}")]
    ResourceCap { requested: usize, cap: usize },

    #[error("solver did not converge: {0}")]
    NoConvergence(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{0}")]
    Core(#[from] ssl_kernel::Error),
}

impl CliError {
    pub const EXIT_CONFIG: i32 = 2;
    pub const EXIT_NO_CONVERGENCE: i32 = 3;
    pub const EXIT_RESOURCE_CAP: i32 = 4;

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Core(ssl_kernel::Error::InvalidParameter(_)) => {
                Self::EXIT_CONFIG
            }
            CliError::NoConvergence(_) | CliError::Core(ssl_kernel::Error::NoConvergence(_)) => {
                Self::EXIT_NO_CONVERGENCE
            }
            CliError::ResourceCap { .. } => Self::EXIT_RESOURCE_CAP,
            _ => 1,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
