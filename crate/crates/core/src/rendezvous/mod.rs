//! PMI-style rendezvous: key-value spaces and barriers for process groups.
//!
//! Independently launched workers connect to the server, init a `(group,
//! rank)` slot, exchange `put`/`get` pairs, and synchronize with `barrier`.
//! Entries are immutable once put (PMI semantics), and a put is guaranteed
//! visible to every group member's gets after the next barrier. Any peer
//! disconnecting without `finalize` fails the whole group; there is no
//! rejoin.

mod client;
pub mod protocol;
mod server;

pub use client::{endpoint_from_env, rank_from_env, ClientSession};
pub use protocol::{ProtocolError, MAX_KEY_LEN, MAX_VALUE_LEN};
pub use server::{start_server, ServerHandle};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RdvError {
    #[error("server startup failed: {0}")]
    Startup(#[source] std::io::Error),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error talking to rendezvous server: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("init rejected: {reason}")]
    Init { reason: String },
    #[error("put rejected: {reason}")]
    Put { reason: String },
    #[error("group failure: {reason}")]
    Group { reason: String },
    #[error("session is {0}, operation requires an initialized session")]
    SessionState(&'static str),
    #[error("unexpected response {got:?} to {sent:?}")]
    UnexpectedResponse { sent: String, got: String },
    #[error("environment variable {0} missing or invalid")]
    Env(&'static str),
}
