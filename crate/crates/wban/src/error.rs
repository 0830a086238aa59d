use std::path::PathBuf;

use thiserror::Error;
use wban_core::channel::ChannelError;
use wban_core::engine::EngineError;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input file, reported with a 1-based line number.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    /// Configuration problem, naming the section and key.
    #[error("config [{section}]: {message}")]
    Config { section: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Channel(#[from] ChannelError),
    #[error("{0}")]
    Engine(#[from] EngineError),
}

impl Error {
    pub fn config(section: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            section: section.into(),
            message: message.into(),
        }
    }

    pub fn parse(path: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// 1 for bad input or configuration, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } | Error::Config { .. } | Error::Channel(_) => 1,
            Error::Io { .. } | Error::Engine(_) => 2,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
