use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },

    #[error("unknown variable `{name}` at offset {offset}")]
    UnknownVariable { name: String, offset: usize },

    #[error("variable `{name}` at offset {offset} is not allowed in this expression")]
    DisallowedVariable { name: String, offset: usize },

    #[error("coefficient table is not symmetric: a[{i}][{j}] != a[{j}][{i}] at x = {at:?}")]
    NonSymmetric { i: usize, j: usize, at: [f64; 2] },

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("mesh mismatch: {0}")]
    MeshMismatch(String),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("non-finite value in {what} at node {node}, level {level}")]
    NonFinite {
        what: &'static str,
        node: usize,
        level: usize,
    },

    #[error("Newton did not converge at time step {step} after {iters} iterations (residual {residual:e})")]
    NewtonDiverged {
        step: usize,
        iters: usize,
        residual: f64,
    },

    #[error("singular step matrix at time step {step}")]
    SingularStep { step: usize },

    #[error("singular matrix in linear solve (pivot {pivot})")]
    Singular { pivot: usize },

    #[error("|g_u| = {value:e} below 1e-12 at node {node}, level {level}")]
    DegenerateConstraint {
        node: usize,
        level: usize,
        value: f64,
    },

    #[error("semismooth Newton exceeded {iters} outer iterations (residual {residual:e})")]
    MaxOuterIters { iters: usize, residual: f64 },

    #[error("line search stalled at outer iteration {iter} (residual {residual:e})")]
    LineSearchStall { iter: usize, residual: f64 },

    #[error("uniform control regularity lost at outer iteration {iter}: margin {margin:e} < gamma0/2 = {threshold:e}")]
    H4Margin {
        iter: usize,
        margin: f64,
        threshold: f64,
    },

    #[error("hypothesis check failed before solve: {0}")]
    Hypothesis(String),

    #[error("eigensolve failed: {0}")]
    Eigen(String),

    #[error("internal consistency: {0}")]
    Consistency(String),

    #[error("invalid sweep plan: {0}")]
    InvalidPlan(String),

    #[error("insufficient valid records: {valid} < {needed}")]
    InsufficientRecords { valid: usize, needed: usize },

    #[error("projection onto the constraint failed at node {node}, level {level}")]
    ProjectionFailure { node: usize, level: usize },

    #[error("constraint becomes active during probing at node {node}, level {level}")]
    ConstraintActive { node: usize, level: usize },

    #[error("manufactured recipe: {0}")]
    Recipe(String),

    #[error("grid file {path}: {message}")]
    GridFile { path: PathBuf, message: String },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
