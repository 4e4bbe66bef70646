//! A problem bound to a mesh: assembled operator, node coordinates and
//! pointwise evaluation of the problem functions on the lattice.

use std::sync::Arc;

use crate::error::Result;
use crate::expr::{Derivs, Point};
use crate::grid::{DiscreteOperator, GridField, MeshQ};
use crate::model::ProblemSpec;

#[derive(Debug, Clone)]
pub struct DiscreteProblem {
    spec: Arc<ProblemSpec>,
    mesh: MeshQ,
    op: Arc<DiscreteOperator>,
    coords: Arc<Vec<[f64; 2]>>,
}

impl DiscreteProblem {
    pub fn new(spec: ProblemSpec, nx: usize, nt: usize) -> Result<Self> {
        let mesh = spec.mesh(nx, nt)?;
        Ok(Self::on_mesh(spec, mesh))
    }

    pub fn on_mesh(spec: ProblemSpec, mesh: MeshQ) -> Self {
        let op = DiscreteOperator::assemble(&spec.coeffs, &mesh);
        DiscreteProblem {
            spec: Arc::new(spec),
            coords: Arc::new(mesh.coords()),
            mesh,
            op: Arc::new(op),
        }
    }

    /// Same mesh and operator, different problem functions.
    pub fn with_spec(&self, spec: ProblemSpec) -> Self {
        DiscreteProblem {
            spec: Arc::new(spec),
            ..self.clone()
        }
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn mesh(&self) -> &MeshQ {
        &self.mesh
    }

    pub fn op(&self) -> &DiscreteOperator {
        &self.op
    }

    pub fn nodes(&self) -> usize {
        self.mesh.nodes()
    }

    pub fn coord(&self, i: usize) -> [f64; 2] {
        self.coords[i]
    }

    #[inline]
    pub fn point(&self, i: usize, n: usize, y: f64, u: f64, w: f64) -> Point {
        Point::new(self.coords[i], self.mesh.time(n), y, u, w)
    }

    pub fn nominal_parameter(&self) -> Result<GridField> {
        self.spec.nominal_parameter(&self.mesh)
    }

    /// `y0` at the interior nodes.
    pub fn initial_state(&self) -> Vec<f64> {
        self.coords
            .iter()
            .map(|x| self.spec.y0.eval(&Point::space(*x)))
            .collect()
    }

    /// Field of pointwise values `h(x_i, t_n, y, u, w)` over all levels.
    pub fn sample(
        &self,
        y: &GridField,
        u: &GridField,
        w: &GridField,
        h: impl Fn(&Point) -> f64,
    ) -> GridField {
        let mut out = GridField::zeros(&self.mesh);
        for n in 0..self.mesh.levels() {
            for i in 0..self.nodes() {
                let p = self.point(i, n, y.at(i, n), u.at(i, n), w.at(i, n));
                out.set(i, n, h(&p));
            }
        }
        out
    }

    pub fn f_derivs(&self, i: usize, n: usize, y: f64, w: f64) -> Derivs {
        self.spec.nonlinearity.derivs(&self.point(i, n, y, 0.0, w))
    }

    pub fn l_derivs(&self, i: usize, n: usize, y: f64, u: f64, w: f64) -> Derivs {
        self.spec.integrand.derivs(&self.point(i, n, y, u, w))
    }

    pub fn g_derivs(&self, i: usize, n: usize, y: f64, u: f64, w: f64) -> Derivs {
        self.spec.constraint.derivs(&self.point(i, n, y, u, w))
    }

    /// Discrete cost `J = Σ_{n>=1} Σ_i L(x_i, t_n, y, u, w) h^d tau`.
    pub fn objective(&self, y: &GridField, u: &GridField, w: &GridField) -> f64 {
        let mut s = 0.0;
        for n in 1..self.mesh.levels() {
            for i in 0..self.nodes() {
                let p = self.point(i, n, y.at(i, n), u.at(i, n), w.at(i, n));
                s += self.spec.integrand.eval(&p);
            }
        }
        s * self.mesh.weight()
    }

    /// `g` at every lattice point.
    pub fn constraint_field(&self, y: &GridField, u: &GridField, w: &GridField) -> GridField {
        self.sample(y, u, w, |p| self.spec.constraint.eval(p))
    }
}
