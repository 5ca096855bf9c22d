//! Subgraph federated learning with a hybrid-attention graph transformer.
//!
//! A single large graph is partitioned across clients, each of which trains a
//! local node classifier whose attention is restricted to sampled neighbors
//! plus a small set of learned global nodes. A central server personalizes
//! aggregation by aligning clients' global nodes with an optimal matching,
//! scoring pairwise similarity, and softmax-weighting the model average.
//! Uploads can be protected with a clamp-then-Laplace local differential
//! privacy mechanism.
//!
//! The crate is a deterministic single-process simulator: every operation
//! that consumes randomness takes an explicit seed, and repeated runs with
//! identical configuration produce bitwise-identical outputs.

pub mod aggregation;
pub mod error;
pub mod global_nodes;
pub mod graph;
pub mod model;
pub mod preprocess;
pub mod privacy;
pub mod runtime;
pub mod seed;
pub mod theory;

pub use error::{Error, Result};
