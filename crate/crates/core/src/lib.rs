//! Federated continual learning by orthogonal gradient projection, with
//! task-identity prediction from per-task feature subspaces.
//!
//! The crate simulates a server and `K` clients that learn a sequence of tasks
//! on small dense networks:
//!
//! * [`linalg`] — dense matrices, exact/randomized SVD, Gram–Schmidt, projection.
//! * [`subspace`] — core-basis extraction, global basis merging, cost ledger.
//! * [`model`] — MLP with activation capture, backprop and an expanding head.
//! * [`data`] — synthetic class/domain-incremental streams, Dirichlet partitions.
//! * [`fedcl`] — local projected training, aggregation, task-identity voting and
//!   the end-to-end experiment loop.
//! * [`harness`] — accuracy/forgetting metrics, TOML configs, CSV output, CLI.
//!
//! See `examples/` for one runnable program per capability.

// Range checks are written `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod fedcl;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod rng;
pub mod subspace;

pub use error::{Error, Result};
