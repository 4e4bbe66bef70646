//! Space–time lattice, grid fields, discrete norms and the elliptic operator.
//!
//! Unknowns live at interior spatial nodes (homogeneous Dirichlet data on the
//! boundary) and at time levels `n = 0..=nt`. Level 0 carries the initial state;
//! the discrete cylinder `Q_h` used by integrals, norms and pointwise constraints
//! is the set of levels `1..=nt`, each level standing for the slab
//! `(t_{n-1}, t_n]` with weight `tau`.

mod io;
mod operator;

pub use io::{read_grid_field, write_grid_field};
pub use operator::DiscreteOperator;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SpatialDomain;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshQ {
    pub domain: SpatialDomain,
    pub horizon: f64,
    /// Interior nodes per axis.
    pub nx: usize,
    pub nt: usize,
}

impl MeshQ {
    pub fn new(domain: SpatialDomain, horizon: f64, nx: usize, nt: usize) -> Result<Self> {
        domain.validate()?;
        if nx < 1 || nt < 1 {
            return Err(Error::InvalidMesh(format!("nx = {nx}, nt = {nt}; both must be >= 1")));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidMesh(format!("horizon {horizon} must be > 0")));
        }
        Ok(MeshQ {
            domain,
            horizon,
            nx,
            nt,
        })
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// Number of interior spatial nodes.
    pub fn nodes(&self) -> usize {
        self.nx.pow(self.dim() as u32)
    }

    pub fn levels(&self) -> usize {
        self.nt + 1
    }

    /// Spacing per axis (second entry repeats the first in 1D).
    pub fn h(&self) -> [f64; 2] {
        let axes = self.domain.axes();
        let h0 = (axes[0][1] - axes[0][0]) / (self.nx + 1) as f64;
        let h1 = axes
            .get(1)
            .map(|[a, b]| (b - a) / (self.nx + 1) as f64)
            .unwrap_or(h0);
        [h0, h1]
    }

    pub fn tau(&self) -> f64 {
        self.horizon / self.nt as f64
    }

    /// Spatial cell volume `h^d`.
    pub fn cell(&self) -> f64 {
        let h = self.h();
        if self.dim() == 1 {
            h[0]
        } else {
            h[0] * h[1]
        }
    }

    /// Quadrature weight of one lattice point of `Q_h`.
    pub fn weight(&self) -> f64 {
        self.cell() * self.tau()
    }

    pub fn time(&self, n: usize) -> f64 {
        if n == self.nt {
            self.horizon
        } else {
            self.horizon * n as f64 / self.nt as f64
        }
    }

    /// Axis indices of flattened node `i` (x index fastest).
    pub fn node_index(&self, i: usize) -> [usize; 2] {
        if self.dim() == 1 {
            [i, 0]
        } else {
            [i % self.nx, i / self.nx]
        }
    }

    pub fn coord(&self, i: usize) -> [f64; 2] {
        let axes = self.domain.axes();
        let h = self.h();
        let [ix, iy] = self.node_index(i);
        let x0 = axes[0][0] + (ix + 1) as f64 * h[0];
        let x1 = if self.dim() == 2 {
            axes[1][0] + (iy + 1) as f64 * h[1]
        } else {
            0.0
        };
        [x0, x1]
    }

    pub fn coords(&self) -> Vec<[f64; 2]> {
        (0..self.nodes()).map(|i| self.coord(i)).collect()
    }

    pub fn check_same(&self, other: &MeshQ) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::MeshMismatch(format!(
                "nx {} vs {}, nt {} vs {}, T {} vs {}",
                self.nx, other.nx, self.nt, other.nt, self.horizon, other.horizon
            )))
        }
    }
}

/// Real values on the lattice, stored level-major: `values[n * nodes + i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    mesh: MeshQ,
    values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormKind {
    L2Q,
    LinfQ,
    W112,
    C0V,
    L2H1,
}

impl GridField {
    pub fn zeros(mesh: &MeshQ) -> Self {
        Self::constant(mesh, 0.0)
    }

    pub fn constant(mesh: &MeshQ, c: f64) -> Self {
        GridField {
            mesh: *mesh,
            values: vec![c; mesh.nodes() * mesh.levels()],
        }
    }

    pub fn from_fn(mesh: &MeshQ, f: impl Fn([f64; 2], f64) -> f64) -> Self {
        let nodes = mesh.nodes();
        let coords = mesh.coords();
        let mut values = Vec::with_capacity(nodes * mesh.levels());
        for n in 0..mesh.levels() {
            let t = mesh.time(n);
            values.extend(coords.iter().map(|x| f(*x, t)));
        }
        GridField {
            mesh: *mesh,
            values,
        }
    }

    pub fn from_values(mesh: &MeshQ, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.nodes() * mesh.levels() {
            return Err(Error::MeshMismatch(format!(
                "expected {} values, got {}",
                mesh.nodes() * mesh.levels(),
                values.len()
            )));
        }
        let field = GridField {
            mesh: *mesh,
            values,
        };
        field.check_finite("grid field")?;
        Ok(field)
    }

    pub fn mesh(&self) -> &MeshQ {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn level(&self, n: usize) -> &[f64] {
        let m = self.mesh.nodes();
        &self.values[n * m..(n + 1) * m]
    }

    pub fn level_mut(&mut self, n: usize) -> &mut [f64] {
        let m = self.mesh.nodes();
        &mut self.values[n * m..(n + 1) * m]
    }

    #[inline]
    pub fn at(&self, i: usize, n: usize) -> f64 {
        self.values[n * self.mesh.nodes() + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, n: usize, v: f64) {
        let m = self.mesh.nodes();
        self.values[n * m + i] = v;
    }

    pub fn check_finite(&self, what: &'static str) -> Result<()> {
        let m = self.mesh.nodes();
        match self.values.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(k) => Err(Error::NonFinite {
                what,
                node: k % m,
                level: k / m,
            }),
        }
    }

    pub fn check_mesh(&self, other: &GridField) -> Result<()> {
        self.mesh.check_same(&other.mesh)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridField {
        GridField {
            mesh: self.mesh,
            values: self.values.iter().map(|v| f(*v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &GridField, f: impl Fn(f64, f64) -> f64) -> Result<GridField> {
        self.check_mesh(other)?;
        Ok(GridField {
            mesh: self.mesh,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        })
    }

    pub fn sub(&self, other: &GridField) -> Result<GridField> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn add(&self, other: &GridField) -> Result<GridField> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn scale(&self, c: f64) -> GridField {
        self.map(|v| c * v)
    }

    /// `self + c * other`.
    pub fn axpy(&self, c: f64, other: &GridField) -> Result<GridField> {
        self.zip_map(other, |a, b| a + c * b)
    }

    /// Values at levels `1..=nt`, i.e. on `Q_h`.
    pub fn interior(&self) -> &[f64] {
        &self.values[self.mesh.nodes()..]
    }

    /// Weighted inner product over `Q_h`.
    pub fn inner(&self, other: &GridField) -> Result<f64> {
        self.check_mesh(other)?;
        let s: f64 = self
            .interior()
            .iter()
            .zip(other.interior())
            .map(|(a, b)| a * b)
            .sum();
        Ok(s * self.mesh.weight())
    }

    pub fn l2q(&self) -> f64 {
        let s: f64 = self.interior().iter().map(|v| v * v).sum();
        (s * self.mesh.weight()).sqrt()
    }

    pub fn linf(&self) -> f64 {
        self.interior().iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Backward difference quotient in time; level 0 is left at zero.
    pub fn time_difference(&self) -> GridField {
        let m = self.mesh.nodes();
        let tau = self.mesh.tau();
        let mut out = GridField::zeros(&self.mesh);
        for k in m..self.values.len() {
            out.values[k] = (self.values[k] - self.values[k - m]) / tau;
        }
        out
    }

    /// Applies `op` level by level.
    pub fn apply_operator(&self, op: &DiscreteOperator) -> Result<GridField> {
        op.mesh().check_same(&self.mesh)?;
        let mut out = GridField::zeros(&self.mesh);
        for n in 0..self.mesh.levels() {
            let av = op.apply(self.level(n));
            out.level_mut(n).copy_from_slice(&av);
        }
        Ok(out)
    }

    /// Discrete H¹ seminorm of one level, including edges to the boundary.
    pub fn h1_seminorm_level(&self, n: usize) -> f64 {
        let mesh = &self.mesh;
        let v = self.level(n);
        let h = mesh.h();
        let nx = mesh.nx;
        let get = |ix: isize, iy: isize| -> f64 {
            if ix < 0 || iy < 0 || ix >= nx as isize || (mesh.dim() == 2 && iy >= nx as isize) {
                0.0
            } else {
                v[iy as usize * nx + ix as usize]
            }
        };
        let mut s = 0.0;
        let ny = if mesh.dim() == 2 { nx as isize } else { 1 };
        for iy in 0..ny {
            for ix in -1..nx as isize {
                let d = (get(ix + 1, iy) - get(ix, iy)) / h[0];
                s += d * d;
            }
        }
        if mesh.dim() == 2 {
            for ix in 0..nx as isize {
                for iy in -1..nx as isize {
                    let d = (get(ix, iy + 1) - get(ix, iy)) / h[1];
                    s += d * d;
                }
            }
        }
        (s * mesh.cell()).sqrt()
    }

    pub fn norm(&self, which: NormKind, op: &DiscreteOperator) -> Result<f64> {
        norm(self, which, op)
    }
}

/// Discrete norms on `Q_h`.
///
/// `W112` is `|δ_t v| + |A v| + |v|` in `L²(Q_h)`, the graph-norm surrogate for
/// `W^{1,1}_2(0,T;D,H)`; `C0V` is the maximum over all levels of the discrete
/// H¹ seminorm; `L2H1` integrates the squared seminorm over `Q_h`.
pub fn norm(field: &GridField, which: NormKind, op: &DiscreteOperator) -> Result<f64> {
    op.mesh().check_same(field.mesh())?;
    Ok(match which {
        NormKind::L2Q => field.l2q(),
        NormKind::LinfQ => field.linf(),
        NormKind::W112 => {
            let av = field.apply_operator(op)?;
            field.time_difference().l2q() + av.l2q() + field.l2q()
        }
        NormKind::C0V => (0..field.mesh.levels())
            .map(|n| field.h1_seminorm_level(n))
            .fold(0.0, f64::max),
        NormKind::L2H1 => {
            let tau = field.mesh.tau();
            let s: f64 = (1..field.mesh.levels())
                .map(|n| field.h1_seminorm_level(n).powi(2))
                .sum();
            (s * tau).sqrt()
        }
    })
}
