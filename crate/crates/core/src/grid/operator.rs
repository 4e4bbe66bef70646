use nalgebra::DMatrix;

use super::MeshQ;
use crate::linalg::BandMatrix;
use crate::model::EllipticCoefficients;

/// Flux-form finite-difference discretization of `A y = -Σ D_j(a_ij D_i y)`
/// with homogeneous Dirichlet data. Stored row-wise; exactly symmetric.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    mesh: MeshQ,
    rows: Vec<Vec<(usize, f64)>>,
    bandwidth: usize,
}

impl DiscreteOperator {
    pub fn assemble(coeffs: &EllipticCoefficients, mesh: &MeshQ) -> Self {
        let n = mesh.nodes();
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        let pair = |rows: &mut Vec<Vec<(usize, f64)>>, p: usize, q: usize, v: f64| {
            rows[p].push((q, v));
            rows[q].push((p, v));
        };
        let axes = mesh.domain.axes();
        let h = mesh.h();
        let nx = mesh.nx;
        if mesh.dim() == 1 {
            let a0 = axes[0][0];
            let h2 = h[0] * h[0];
            let mid = |k: isize| coeffs.eval_sym(0, 0, [a0 + (k as f64 + 1.5) * h[0], 0.0]);
            let mut diag = vec![0.0; n];
            for k in -1..nx as isize {
                let flux = mid(k) / h2;
                if k >= 0 {
                    diag[k as usize] += flux;
                }
                if k + 1 < nx as isize {
                    diag[(k + 1) as usize] += flux;
                }
                if k >= 0 && k + 1 < nx as isize {
                    pair(&mut rows, k as usize, (k + 1) as usize, -flux);
                }
            }
            for (k, d) in diag.into_iter().enumerate() {
                rows[k].push((k, d));
            }
        } else {
            let (ax, ay) = (axes[0][0], axes[1][0]);
            let pos = |ix: isize, iy: isize| [ax + (ix + 1) as f64 * h[0], ay + (iy + 1) as f64 * h[1]];
            let inside = |ix: isize, iy: isize| ix >= 0 && iy >= 0 && ix < nx as isize && iy < nx as isize;
            let id = |ix: isize, iy: isize| iy as usize * nx + ix as usize;
            let mut diag = vec![0.0; n];
            // x-direction fluxes through vertical edges
            for iy in 0..nx as isize {
                for ix in -1..nx as isize {
                    let mut m = pos(ix, iy);
                    m[0] += 0.5 * h[0];
                    let flux = coeffs.eval_sym(0, 0, m) / (h[0] * h[0]);
                    if inside(ix, iy) {
                        diag[id(ix, iy)] += flux;
                    }
                    if inside(ix + 1, iy) {
                        diag[id(ix + 1, iy)] += flux;
                    }
                    if inside(ix, iy) && inside(ix + 1, iy) {
                        pair(&mut rows, id(ix, iy), id(ix + 1, iy), -flux);
                    }
                }
            }
            for ix in 0..nx as isize {
                for iy in -1..nx as isize {
                    let mut m = pos(ix, iy);
                    m[1] += 0.5 * h[1];
                    let flux = coeffs.eval_sym(1, 1, m) / (h[1] * h[1]);
                    if inside(ix, iy) {
                        diag[id(ix, iy)] += flux;
                    }
                    if inside(ix, iy + 1) {
                        diag[id(ix, iy + 1)] += flux;
                    }
                    if inside(ix, iy) && inside(ix, iy + 1) {
                        pair(&mut rows, id(ix, iy), id(ix, iy + 1), -flux);
                    }
                }
            }
            // central mixed derivatives
            let a12 = |ix: isize, iy: isize| coeffs.eval_sym(0, 1, pos(ix, iy));
            let c = 4.0 * h[0] * h[1];
            for iy in 0..nx as isize {
                for ix in 0..nx as isize {
                    if inside(ix + 1, iy + 1) {
                        let v = -(a12(ix + 1, iy) + a12(ix, iy + 1)) / c;
                        if v != 0.0 {
                            pair(&mut rows, id(ix, iy), id(ix + 1, iy + 1), v);
                        }
                    }
                    if inside(ix + 1, iy - 1) {
                        let v = (a12(ix + 1, iy) + a12(ix, iy - 1)) / c;
                        if v != 0.0 {
                            pair(&mut rows, id(ix, iy), id(ix + 1, iy - 1), v);
                        }
                    }
                }
            }
            for (k, d) in diag.into_iter().enumerate() {
                rows[k].push((k, d));
            }
        }
        for r in rows.iter_mut() {
            r.sort_by_key(|e| e.0);
        }
        let bandwidth = if mesh.dim() == 1 { 1 } else { nx + 1 };
        DiscreteOperator {
            mesh: *mesh,
            rows,
            bandwidth,
        }
    }

    pub fn mesh(&self) -> &MeshQ {
        &self.mesh
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    /// Half-bandwidth in the natural node ordering.
    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.iter().map(|(j, a)| a * v[*j]).sum())
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for (i, r) in self.rows.iter().enumerate() {
            for (j, a) in r {
                m[(i, *j)] += a;
            }
        }
        m
    }

    pub fn is_symmetric(&self) -> bool {
        let d = self.to_dense();
        d == d.transpose()
    }

    /// `I + tau (A + diag(c))` as a band matrix.
    pub fn step_matrix(&self, tau: f64, c: &[f64]) -> BandMatrix {
        let n = self.dim();
        let mut b = BandMatrix::zeros(n, self.bandwidth, self.bandwidth);
        for (i, r) in self.rows.iter().enumerate() {
            for (j, a) in r {
                b.add(i, *j, tau * a);
            }
            b.add(i, i, 1.0 + tau * c[i]);
        }
        b
    }
}
