//! Desk-scale hybrid data/HPC pipeline engine.
//!
//! The crate glues five subsystems together:
//!
//! - [`rendezvous`]: a PMI-style server and client. Independently launched
//!   processes exchange `(key, value)` pairs inside a per-group key-value
//!   space and synchronize through barriers. The server exchanges
//!   information only; it never launches processes.
//! - [`collectives`]: peer-to-peer communicators bootstrapped through the
//!   rendezvous server, with ring allreduce, binomial broadcast, and a
//!   barrier over direct worker-to-worker connections.
//! - [`engine`]: a minimal driver/worker partitioned-dataset engine with
//!   `parallelize`/`map`/`map_partitions_with_index`/`union`/`collect`, and
//!   gang scheduling for collective tasks (communicator rank = partition
//!   index).
//! - [`streamlog`]: an append-only topic/partition/offset log stored as
//!   checksummed segment files, plus a micro-batch driver that turns offset
//!   ranges into dataset partitions.
//! - [`ptycho`] and [`tomo`]: two end-to-end scientific pipelines
//!   (iterative phase retrieval and algebraic tomographic reconstruction)
//!   exercising the engine and the collectives.
//!
//! [`rawio`] holds the shared raw-array/PGM/CSV file formats the pipelines
//! emit.

pub mod bytesio;
pub mod collectives;
pub mod engine;
pub mod ptycho;
pub mod rawio;
pub mod rendezvous;
pub mod streamlog;
pub mod tomo;
