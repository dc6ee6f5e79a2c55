//! Numerical toolkit for infinite-horizon optimal control problems whose
//! dynamics and costs jump across the hyperplane `{x_N = 0}`.
//!
//! The crate computes the minimal and maximal value functions `U⁻` and `U⁺`
//! of the one-dimensional problem, the interface values `u_H` and `u_H_reg`,
//! regularized approximations, and controlled trajectories.

pub mod error;
pub mod grid;
pub mod interface;
mod kernel;
pub mod problem;
pub mod schemes;
pub mod trajectory;
pub mod verify;

pub use error::{Error, Result};
pub use kernel::{Iteration, SolveStats, SolverOptions};
