//! Convergence-bound terms and metrics post-processing.

mod bound;
mod summary;

pub use bound::{bound_a1, bound_a2, bound_rhs, BoundParams};
pub use summary::{
    mean_std, read_metrics, summarize, write_table, ModeSummary, SeriesRow, Summary,
};
