//! Reverse-mode automatic differentiation, the optimizer, and the
//! finite-difference gradient checker.

mod adam;
mod gradcheck;
mod graph;

pub use adam::{adam_step, AdamParams, AdamState};
pub use gradcheck::{grad_check, DEFAULT_STEP};
pub use graph::{AutodiffError, Graph, Matrix, Tensor};
