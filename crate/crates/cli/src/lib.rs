//! Library half of the `bonsai` binary: file chunking, the local deviation
//! store and the client commands.

use std::io;

use thiserror::Error;

pub mod commands;
pub mod manifest;
pub mod store;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("server unreachable at {addr}: {source}")]
    Unreachable { addr: String, source: io::Error },
    #[error("deviation store missing: {0}")]
    MissingStore(String),
    #[error("manifest mismatch: {0}")]
    ManifestMismatch(String),
    #[error("{0}")]
    Usage(String),
    #[error("protocol: {0}")]
    Protocol(#[from] bonsai_service::ProtocolError),
    #[error(transparent)]
    Core(#[from] bonsai_core::Error),
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Unreachable { .. } => 2,
            CliError::MissingStore(_) => 3,
            CliError::ManifestMismatch(_) => 4,
            CliError::Usage(_) => 64,
            _ => 1,
        }
    }
}
