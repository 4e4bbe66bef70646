//! Discrete KKT solver, second-order checks and Lipschitz-stability harness for
//! parametric semilinear parabolic optimal control with mixed pointwise
//! constraints `g(x, t, y, u, w) <= 0`.
//!
//! The state equation `y_t + A y + f(x, t, y, w) = u + w` is discretized by
//! implicit Euler in time and flux-form finite differences in space. Optimality
//! systems are formed for the discrete problem, so the adjoint is the exact
//! transpose of the linearized stepping.

pub mod config;
pub mod discrete;
pub mod error;
pub mod expr;
pub mod fixtures;
pub mod grid;
pub mod kkt;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod pde;
pub mod sosc;
pub mod stability;

pub use error::{Error, Result};
