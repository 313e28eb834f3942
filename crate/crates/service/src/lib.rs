//! Binary wire protocol between clients and the cloud engine, a threaded
//! TCP server, and a blocking remote client.
//!
//! The transport carries no authentication or encryption; deployments need
//! to wrap it in TLS or an authenticated tunnel.

pub mod client;
pub mod frame;
pub mod server;

pub use client::{RemoteClient, RemotePolicy};
pub use frame::{Frame, Message, ProtocolError};
pub use server::{Server, ServerHandle, ServerOptions};

/// Environment variable naming the server address.
pub const ADDR_ENV: &str = "BONSAI_ADDR";

/// Address used when neither a flag nor `BONSAI_ADDR` is given.
pub const DEFAULT_ADDR: &str = "127.0.0.1:7878";
