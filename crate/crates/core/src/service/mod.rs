//! Hosting layer: audio ingestion, the trial runner shared by the CLI and the
//! live protocol, HTTP endpoints and the command-line surface.

pub mod audio;
pub mod cli;
pub mod config;
pub mod http;
pub mod live;
pub mod runner;

use thiserror::Error;

/// Command failures, split by who is at fault. Input errors exit with 1,
/// internal ones with 2.
#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Internal(String),
}

impl ServiceError {
    pub fn input(e: impl std::fmt::Display) -> Self {
        Self::Input(e.to_string())
    }

    pub fn internal(e: impl std::fmt::Display) -> Self {
        Self::Internal(e.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Input(_) => 1,
            Self::Internal(_) => 2,
        }
    }
}

impl From<crate::session::SessionError> for ServiceError {
    fn from(e: crate::session::SessionError) -> Self {
        use crate::session::SessionError as E;
        match e {
            E::Io(_) => Self::internal(e),
            _ => Self::input(e),
        }
    }
}
