//! Minimax probability machines trained for non-decomposable performance
//! measures such as F-beta, the geometric mean or the Jaccard coefficient.
//!
//! The solver sees only class means, class covariances and the positive
//! proportion. It alternates a grid search over worst-case error rates with
//! a gradient-projection update of the unit direction.

pub mod cli;
pub mod dataset;
pub mod error;
pub mod kernel;
pub mod measures;
pub mod moments;
pub mod mpm;
mod serde_util;
pub mod solver;
pub mod synthetic;

pub use dataset::{BinaryDataset, Dataset};
pub use error::{Error, Result};
pub use kernel::{KernelModel, KernelOptions, KernelSpec};
pub use measures::{MeasureSpec, Rates};
pub use moments::ClassMoments;
pub use mpm::{solve_mpm, MpmOptions, MpmResult};
pub use solver::{solve, LinearModel, MomentProblem, SolverOptions, SolverResult, SolverTrace};
