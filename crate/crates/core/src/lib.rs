//! Federated learning with partial model pruning and personalization over a
//! modeled OFDMA uplink.
//!
//! The model is split into a personalized part that never leaves a device and
//! a global part that is pruned, trained under a mask, uploaded and averaged
//! per coordinate. Each round the server picks bandwidth fractions and pruning
//! ratios so every device meets a latency budget while the total pruning is as
//! small as possible.
//!
//! Modules, bottom up:
//!
//! - [`wireless`]: uplink rate, computation and transmission latency, fading.
//! - [`allocator`]: closed-form bandwidth/pruning allocation with a multiplier
//!   bisection, plus an independent projected-gradient oracle.
//! - [`model`]: a small partitioned network with exact gradients, importance
//!   scores, pruning masks and checkpoints.
//! - [`data`]: IDX ingestion, synthetic blobs and label-sharded partitions.
//! - [`fedsim`]: the round loop, aggregation, evaluation and metrics stream.
//! - [`analysis`]: convergence-bound terms and metrics summaries.
//! - [`config`]: JSON experiment configuration with defaults.
//! - [`output`]: write-then-rename output files.
//! - [`cli`]: the work behind each `fedprune` subcommand.

pub mod allocator;
pub mod analysis;
pub mod cli;
pub mod config;
pub mod data;
mod error;
pub mod fedsim;
pub mod model;
pub mod output;
pub mod rng;
pub mod wireless;

pub use error::{Error, Result};
