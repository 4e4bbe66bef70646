//! The continuous problem: domain, elliptic coefficients, integrand, nonlinearity,
//! mixed constraint, initial state and nominal parameter.

mod audit;

pub use audit::{audit_h1, audit_h2_h3, audit_h4, AuditReport, LipschitzSamples};

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{Point, ScalarFn2, Var, VarSet};
use crate::grid::{read_grid_field, GridField, MeshQ};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SpatialDomain {
    Interval { bounds: [f64; 2] },
    Rectangle { bounds: [[f64; 2]; 2] },
}

impl SpatialDomain {
    pub fn interval(a: f64, b: f64) -> Result<Self> {
        let d = SpatialDomain::Interval { bounds: [a, b] };
        d.validate()?;
        Ok(d)
    }

    pub fn rectangle(x: [f64; 2], y: [f64; 2]) -> Result<Self> {
        let d = SpatialDomain::Rectangle { bounds: [x, y] };
        d.validate()?;
        Ok(d)
    }

    pub fn unit_interval() -> Self {
        SpatialDomain::Interval { bounds: [0.0, 1.0] }
    }

    pub fn validate(&self) -> Result<()> {
        for (k, [a, b]) in self.axes().iter().enumerate() {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(Error::InvalidDomain(format!(
                    "axis {k} bounds [{a}, {b}] must be finite and strictly ordered"
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            SpatialDomain::Interval { .. } => 1,
            SpatialDomain::Rectangle { .. } => 2,
        }
    }

    pub fn axes(&self) -> Vec<[f64; 2]> {
        match self {
            SpatialDomain::Interval { bounds } => vec![*bounds],
            SpatialDomain::Rectangle { bounds } => bounds.to_vec(),
        }
    }

    pub fn measure(&self) -> f64 {
        self.axes().iter().map(|[a, b]| b - a).product()
    }

    /// Maps unit-cube coordinates onto the domain.
    pub fn from_unit(&self, s: [f64; 2]) -> [f64; 2] {
        let axes = self.axes();
        let mut x = [0.0; 2];
        for (k, [a, b]) in axes.iter().enumerate() {
            x[k] = a + s[k] * (b - a);
        }
        x
    }

    /// Points on the boundary: the two endpoints, or `per_edge` points along each edge.
    pub fn boundary_points(&self, per_edge: usize) -> Vec<[f64; 2]> {
        match self {
            SpatialDomain::Interval { bounds: [a, b] } => vec![[*a, 0.0], [*b, 0.0]],
            SpatialDomain::Rectangle { .. } => {
                let m = per_edge.max(2);
                let mut pts = Vec::with_capacity(4 * m);
                for k in 0..m {
                    let s = k as f64 / (m - 1) as f64;
                    pts.push(self.from_unit([s, 0.0]));
                    pts.push(self.from_unit([s, 1.0]));
                    pts.push(self.from_unit([0.0, s]));
                    pts.push(self.from_unit([1.0, s]));
                }
                pts
            }
        }
    }
}

/// Coefficient table `a_ij(x)` of the divergence-form operator.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipticCoefficients {
    table: Vec<Vec<ScalarFn2>>,
}

impl EllipticCoefficients {
    /// `a_ij = a(x) δ_ij` in dimension `dim`.
    pub fn isotropic(a: ScalarFn2, dim: usize) -> Self {
        let table = (0..dim)
            .map(|i| {
                (0..dim)
                    .map(|j| if i == j { a.clone() } else { ScalarFn2::zero() })
                    .collect()
            })
            .collect();
        EllipticCoefficients { table }
    }

    pub fn identity(dim: usize) -> Self {
        Self::isotropic(ScalarFn2::constant(1.0), dim)
    }

    /// Full table; entries may only depend on the spatial coordinates.
    /// Symmetry is checked numerically by [`audit_h1`].
    pub fn from_table(table: Vec<Vec<ScalarFn2>>) -> Result<Self> {
        let d = table.len();
        if !(1..=2).contains(&d) || table.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidProblem(
                "coefficient table must be 1x1 or 2x2".into(),
            ));
        }
        let table = table
            .into_iter()
            .map(|row| {
                row.into_iter()
                    .map(|a| a.restrict(VarSet::space()))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(EllipticCoefficients { table })
    }

    pub fn dim(&self) -> usize {
        self.table.len()
    }

    pub fn entry(&self, i: usize, j: usize) -> &ScalarFn2 {
        &self.table[i][j]
    }

    /// `a_ij(x)`, symmetrized.
    pub fn eval_sym(&self, i: usize, j: usize, x: [f64; 2]) -> f64 {
        let p = Point::space(x);
        if i == j {
            self.table[i][i].eval(&p)
        } else {
            0.5 * (self.table[i][j].eval(&p) + self.table[j][i].eval(&p))
        }
    }
}

/// Where the nominal parameter comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum ParameterSource {
    Constant(f64),
    Expression(ScalarFn2),
    Grid(GridField),
    /// A grid file, read when the mesh is known.
    GridFile(PathBuf),
}

impl ParameterSource {
    /// The field on `mesh`; expressions are evaluated at every level.
    pub fn sample(&self, mesh: &MeshQ) -> Result<GridField> {
        match self {
            ParameterSource::Constant(c) => Ok(GridField::constant(mesh, *c)),
            ParameterSource::Expression(e) => Ok(GridField::from_fn(mesh, |x, t| {
                e.eval(&Point::new(x, t, 0.0, 0.0, 0.0))
            })),
            ParameterSource::Grid(g) => {
                g.mesh().check_same(mesh)?;
                Ok(g.clone())
            }
            ParameterSource::GridFile(path) => read_grid_field(path, mesh),
        }
    }
}

/// Full description of the control problem `P(w)`.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub domain: SpatialDomain,
    pub horizon: f64,
    pub coeffs: EllipticCoefficients,
    pub y0: ScalarFn2,
    pub integrand: ScalarFn2,
    pub nonlinearity: ScalarFn2,
    pub constraint: ScalarFn2,
    pub parameter: ParameterSource,
}

/// Variables each ingredient may reference.
pub fn vars_integrand() -> VarSet {
    VarSet::all()
}

pub fn vars_nonlinearity() -> VarSet {
    VarSet::of(&[Var::X, Var::X2, Var::T, Var::Y, Var::W])
}

pub fn vars_constraint() -> VarSet {
    VarSet::all()
}

pub fn vars_parameter() -> VarSet {
    VarSet::of(&[Var::X, Var::X2, Var::T])
}

impl ProblemSpec {
    /// Builds and validates a problem. Variable restrictions are enforced on every
    /// ingredient and `y0` must vanish on the boundary.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        domain: SpatialDomain,
        horizon: f64,
        coeffs: EllipticCoefficients,
        y0: ScalarFn2,
        integrand: ScalarFn2,
        nonlinearity: ScalarFn2,
        constraint: ScalarFn2,
        parameter: ParameterSource,
    ) -> Result<Self> {
        domain.validate()?;
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidProblem(format!("horizon T = {horizon} must be > 0")));
        }
        if coeffs.dim() != domain.dim() {
            return Err(Error::InvalidProblem(format!(
                "coefficient table is {0}x{0} but the domain has dimension {1}",
                coeffs.dim(),
                domain.dim()
            )));
        }
        let y0 = y0.restrict(VarSet::space())?;
        let integrand = integrand.restrict(vars_integrand())?;
        let nonlinearity = nonlinearity.restrict(vars_nonlinearity())?;
        let constraint = constraint.restrict(vars_constraint())?;
        let parameter = match parameter {
            ParameterSource::Expression(e) => ParameterSource::Expression(e.restrict(vars_parameter())?),
            other => other,
        };
        let spec = ProblemSpec {
            domain,
            horizon,
            coeffs,
            y0,
            integrand,
            nonlinearity,
            constraint,
            parameter,
        };
        spec.check_boundary_initial_state()?;
        Ok(spec)
    }

    fn check_boundary_initial_state(&self) -> Result<()> {
        let pts = self.domain.boundary_points(33);
        let scale = pts
            .iter()
            .map(|x| self.y0.eval(&Point::space(*x)).abs())
            .fold(1.0f64, f64::max);
        for x in pts {
            let v = self.y0.eval(&Point::space(x));
            if !(v.abs() <= 1e-10 * scale) {
                return Err(Error::InvalidProblem(format!(
                    "initial state must vanish on the boundary; y0({:?}) = {v}",
                    &x[..self.domain.dim()]
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// The nominal parameter sampled on `mesh`.
    pub fn nominal_parameter(&self, mesh: &MeshQ) -> Result<GridField> {
        self.parameter.sample(mesh)
    }

    /// Builds a mesh on this problem's domain and horizon.
    pub fn mesh(&self, nx: usize, nt: usize) -> Result<MeshQ> {
        MeshQ::new(self.domain, self.horizon, nx, nt)
    }
}
