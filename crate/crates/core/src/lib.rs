//! Regularized Jacobi iteration for convex programs whose constraint set is a
//! product of per-agent sets.
//!
//! Each agent owns one block of the decision vector and, at every iteration,
//! minimizes the shared objective over its own block with the other blocks
//! frozen at their previous values, plus a proximal penalty `c‖zⁱ − xⁱ‖²`.
//! All agents update in parallel.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod ev;
pub mod instances;
pub mod io;
pub mod iteration;
pub mod linalg;
pub mod problem;
pub mod sets;
pub mod spectral;

pub use error::{Error, Result};
pub use iteration::{run, IterationConfig, IterationTrace, Method, TraceRecord};
pub use problem::{
    BlockDecomposition, BlockPartition, LogSumExp, Problem, QuadraticObjective, SmoothObjective,
};
pub use sets::{FeasibleSet, LocalQp};
pub use spectral::{compute_bounds, pick_c, CChoice, CPolicy, SpectralBounds};
