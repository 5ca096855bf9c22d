//! Library surface of the experiment driver, split out so the stages are
//! testable without spawning the binary.

pub mod config;
pub mod pipeline;
