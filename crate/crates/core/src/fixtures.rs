//! Reference problems on the unit interval with `a = 1` and `T = 1`.

use crate::error::Result;
use crate::expr::{ScalarFn2, VarSet};
use crate::model::{EllipticCoefficients, ParameterSource, ProblemSpec, SpatialDomain};

fn expr(s: &str) -> Result<ScalarFn2> {
    ScalarFn2::parse(s, VarSet::all())
}

/// Problem on `(0, 1) x (0, 1)` from expression strings.
pub fn unit_problem(
    y0: &str,
    integrand: &str,
    nonlinearity: &str,
    constraint: &str,
    parameter: ParameterSource,
) -> Result<ProblemSpec> {
    ProblemSpec::new(
        SpatialDomain::unit_interval(),
        1.0,
        EllipticCoefficients::identity(1),
        ScalarFn2::parse(y0, VarSet::space())?,
        expr(integrand)?,
        expr(nonlinearity)?,
        expr(constraint)?,
        parameter,
    )
}

/// `L = ½(y - y_d)² + ½u²`, `f = 0`, `g = u - ψ`, `y0 = 0`, `w̄ = 0`.
pub fn lq(y_d: &str, psi: &str) -> Result<ProblemSpec> {
    unit_problem(
        "0",
        &format!("0.5*(y - ({y_d}))^2 + 0.5*u^2"),
        "0",
        &format!("u - ({psi})"),
        ParameterSource::Constant(0.0),
    )
}

/// Target used by the linear-quadratic fixtures.
pub const LQ_TARGET: &str = "10*sin(pi*x)*t";

/// LQ problem whose constraint never binds.
pub fn lq_inactive() -> Result<ProblemSpec> {
    lq(LQ_TARGET, "1000000")
}

/// Upper bound of [`lq_active`].
pub const LQ_BOUND: f64 = 0.4;

/// LQ problem with `u <= LQ_BOUND` binding on a region.
pub fn lq_active() -> Result<ProblemSpec> {
    lq(LQ_TARGET, &LQ_BOUND.to_string())
}

/// All data zero: the optimum is `u = 0`, `y = 0`, `J = 0`.
pub fn zero_lq() -> Result<ProblemSpec> {
    lq("0", "1")
}

/// Semilinear example: `f = y (w² + t⁴ + x²)`, `g = u + w`, `w̄ = 1/2`,
/// `y0 = sin(πx)` and a target that makes `u <= -w` bind on part of `Q`.
pub fn example_semilinear() -> Result<ProblemSpec> {
    unit_problem(
        "sin(pi*x)",
        "0.5*(y - 50*sin(2*pi*x))^2 + 0.5*u^2",
        "y*(w^2 + t^4 + x^2)",
        "u + w",
        ParameterSource::Constant(0.5),
    )
}

/// Concave in `u` with an inactive bound: stationary points are saddles.
pub fn concave_control() -> Result<ProblemSpec> {
    unit_problem(
        "0",
        &format!("0.5*(y - ({LQ_TARGET}))^2 - 0.5*u^2"),
        "0",
        "u - 1000000",
        ParameterSource::Constant(0.0),
    )
}
