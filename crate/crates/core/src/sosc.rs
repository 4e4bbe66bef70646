//! Second-order quadratic form, coercivity constant over linearized pairs and
//! the pointwise Legendre bound.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::discrete::DiscreteProblem;
use crate::error::{Error, Result};
use crate::grid::GridField;
use crate::kkt::KktPoint;
use crate::pde::Linearization;

/// Largest control dimension handled by the dense eigensolver.
pub const DENSE_LIMIT: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Dense,
    Iterative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Holds,
    Indeterminate,
    Fails,
}

#[derive(Debug, Clone, Serialize)]
pub struct CoercivityReport {
    pub alpha: f64,
    pub rho: f64,
    #[serde(skip)]
    pub witness_v: GridField,
    pub method: Method,
    /// `1e-8` times the largest eigenvalue magnitude.
    pub alpha_tol: f64,
    pub verdict: Verdict,
}

/// Pointwise weights `a ζ² + 2 b ζ v + c v²` of the second-order form.
#[derive(Debug, Clone)]
pub struct FormCoefficients {
    pub a: GridField,
    pub b: GridField,
    pub c: GridField,
}

impl FormCoefficients {
    pub fn new(dp: &DiscreteProblem, pt: &KktPoint, w: &GridField) -> Result<Self> {
        let mesh = dp.mesh();
        for f in [&pt.y, &pt.u, &pt.phi, &pt.e, w] {
            mesh.check_same(f.mesh())?;
        }
        let (mut a, mut b, mut c) = (GridField::zeros(mesh), GridField::zeros(mesh), GridField::zeros(mesh));
        for n in 1..mesh.levels() {
            for i in 0..dp.nodes() {
                let (y, u, wv) = (pt.y.at(i, n), pt.u.at(i, n), w.at(i, n));
                let (phi, e) = (pt.phi.at(i, n), pt.e.at(i, n));
                let l = dp.l_derivs(i, n, y, u, wv);
                let g = dp.g_derivs(i, n, y, u, wv);
                let f = dp.f_derivs(i, n, y, wv);
                a.set(i, n, l.yy + e * g.yy + phi * f.yy);
                b.set(i, n, l.yu + e * g.yu);
                c.set(i, n, l.uu + e * g.uu);
            }
        }
        Ok(FormCoefficients { a, b, c })
    }

    fn eval(&self, zeta: &GridField, v: &GridField) -> f64 {
        let mesh = zeta.mesh();
        let s: f64 = (mesh.nodes()..zeta.values().len())
            .map(|k| {
                let (z, x) = (zeta.values()[k], v.values()[k]);
                self.a.values()[k] * z * z + 2.0 * self.b.values()[k] * z * x + self.c.values()[k] * x * x
            })
            .sum();
        s * mesh.weight()
    }

    /// Legendre bound: `min (L_uu + e g_uu)` over the lattice.
    pub fn rho(&self) -> f64 {
        self.c.interior().iter().fold(f64::INFINITY, |m, v| m.min(*v))
    }
}

/// `∫ L_yy ζ² + 2 L_yu ζ v + L_uu v² + e (g_yy ζ² + 2 g_yu ζ v + g_uu v²) + φ f_yy ζ²`
/// by lattice quadrature over `Q_h`.
pub fn quadratic_form(
    dp: &DiscreteProblem,
    pt: &KktPoint,
    w: &GridField,
    zeta: &GridField,
    v: &GridField,
) -> Result<f64> {
    dp.mesh().check_same(zeta.mesh())?;
    dp.mesh().check_same(v.mesh())?;
    Ok(FormCoefficients::new(dp, pt, w)?.eval(zeta, v))
}

/// Reduced Hessian `H v = S*(a S v + b v) + b S v + c v` acting on controls.
pub struct ReducedHessian {
    lin: Linearization,
    coef: FormCoefficients,
}

impl ReducedHessian {
    pub fn new(dp: &DiscreteProblem, pt: &KktPoint, w: &GridField) -> Result<Self> {
        Ok(ReducedHessian {
            lin: Linearization::new(dp, &pt.y, w)?,
            coef: FormCoefficients::new(dp, pt, w)?,
        })
    }

    pub fn with_coefficients(lin: Linearization, coef: FormCoefficients) -> Self {
        ReducedHessian { lin, coef }
    }

    pub fn coefficients(&self) -> &FormCoefficients {
        &self.coef
    }

    pub fn dim(&self) -> usize {
        let m = self.lin.problem().mesh();
        m.nodes() * m.nt
    }

    fn field(&self, x: &[f64]) -> GridField {
        let mesh = self.lin.problem().mesh();
        let mut v = GridField::zeros(mesh);
        v.values_mut()[mesh.nodes()..].copy_from_slice(x);
        v
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let v = self.field(x);
        let z = self.lin.forward(&v)?;
        let FormCoefficients { a, b, c } = &self.coef;
        let src = GridField::from_values(
            v.mesh(),
            (0..v.values().len())
                .map(|k| a.values()[k] * z.values()[k] + b.values()[k] * v.values()[k])
                .collect(),
        )?;
        let p = self.lin.backward(&src)?;
        let n0 = v.mesh().nodes();
        Ok((n0..v.values().len())
            .map(|k| p.values()[k] + b.values()[k] * z.values()[k] + c.values()[k] * v.values()[k])
            .collect())
    }

    /// Dense matrix from `dim` Hessian products, checked for symmetry.
    pub fn assemble(&self) -> Result<DMatrix<f64>> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for k in 0..n {
            e[k] = 1.0;
            m.set_column(k, &DVector::from_vec(self.apply(&e)?));
            e[k] = 0.0;
        }
        let asym = (&m - m.transpose()).amax();
        if asym > 1e-9 * m.amax().max(1e-300) {
            return Err(Error::Consistency(format!(
                "assembled reduced Hessian is not symmetric (max asymmetry {asym:e})"
            )));
        }
        Ok((&m + m.transpose()) * 0.5)
    }

    fn witness(&self, x: &[f64]) -> GridField {
        self.field(x)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

fn dense_min(h: &ReducedHessian) -> Result<(f64, f64, Vec<f64>)> {
    let m = h.assemble()?;
    let eig = SymmetricEigen::try_new(m, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Eigen("symmetric eigensolver did not converge".into()))?;
    let (k, alpha) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (k, v)| if *v < acc.1 { (k, *v) } else { acc });
    let scale = eig.eigenvalues.amax();
    Ok((alpha, scale, eig.eigenvectors.column(k).iter().copied().collect()))
}

/// Lanczos with full reorthogonalization for the extreme Ritz values, then
/// shifted inverse iteration with conjugate gradients on `H - σ I`, `σ` below
/// the spectrum.
fn iterative_min(h: &ReducedHessian, seed: u64) -> Result<(f64, f64, Vec<f64>)> {
    let n = h.dim();
    let steps = n.min(120);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(steps);
    let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    normalize(&mut v);
    let (mut alphas, mut betas) = (Vec::new(), Vec::new());
    for j in 0..steps {
        q.push(v.clone());
        let mut r = h.apply(&v)?;
        let aj = dot(&r, &v);
        alphas.push(aj);
        for _ in 0..2 {
            for qk in &q {
                let c = dot(&r, qk);
                r.iter_mut().zip(qk).for_each(|(x, y)| *x -= c * y);
            }
        }
        let b = normalize(&mut r);
        if j + 1 == steps || b <= 1e-12 * aj.abs().max(1.0) {
            break;
        }
        betas.push(b);
        v = r;
    }
    let k = alphas.len();
    let mut t = DMatrix::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alphas[i];
        if i + 1 < k {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = SymmetricEigen::try_new(t, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Eigen("tridiagonal eigensolve did not converge".into()))?;
    let (kmin, theta) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, v)| if *v < acc.1 { (i, *v) } else { acc });
    let scale = eig.eigenvalues.amax().max(1e-300);
    let mut x = vec![0.0; n];
    for (i, qi) in q.iter().enumerate().take(k) {
        let c = eig.eigenvectors[(i, kmin)];
        x.iter_mut().zip(qi).for_each(|(a, b)| *a += c * b);
    }
    normalize(&mut x);
    let hx = h.apply(&x)?;
    let res = hx.iter().zip(&x).map(|(a, b)| (a - theta * b).powi(2)).sum::<f64>().sqrt();
    let mut shift = theta - res - 1e-3 * scale;
    let mut lambda = theta;
    for _ in 0..60 {
        let mut y = match cg_shifted(h, shift, &x, 1e-13)? {
            Some(y) => y,
            None => {
                // negative curvature: the shift is not below the spectrum
                shift -= 1e-2 * scale;
                continue;
            }
        };
        normalize(&mut y);
        let hy = h.apply(&y)?;
        let rq = dot(&y, &hy);
        let r = hy.iter().zip(&y).map(|(a, b)| (a - rq * b).powi(2)).sum::<f64>().sqrt();
        x = y;
        lambda = rq;
        if r <= 1e-11 * scale {
            break;
        }
    }
    Ok((lambda, scale, x))
}

/// CG on `(H - σ I) y = b`; `None` if a direction of non-positive curvature appears.
fn cg_shifted(h: &ReducedHessian, shift: f64, b: &[f64], tol: f64) -> Result<Option<Vec<f64>>> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let b_norm = rr.sqrt();
    for _ in 0..(4 * n).max(50) {
        let mut ap = h.apply(&p)?;
        ap.iter_mut().zip(&p).for_each(|(a, q)| *a -= shift * q);
        let curv = dot(&p, &ap);
        if curv <= 0.0 {
            return Ok(None);
        }
        let step = rr / curv;
        x.iter_mut().zip(&p).for_each(|(a, q)| *a += step * q);
        r.iter_mut().zip(&ap).for_each(|(a, q)| *a -= step * q);
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() <= tol * b_norm {
            break;
        }
        let beta = rr_new / rr;
        p.iter_mut().zip(&r).for_each(|(a, q)| *a = q + beta * *a);
        rr = rr_new;
    }
    Ok(Some(x))
}

fn verdict(alpha: f64, tol: f64) -> Verdict {
    if alpha >= tol {
        Verdict::Holds
    } else if alpha > -tol {
        Verdict::Indeterminate
    } else {
        Verdict::Fails
    }
}

/// Smallest Rayleigh quotient of `v -> Q(S v, v) / |v|²` over all controls,
/// with `S` the linearized solution map at `pt`.
pub fn coercivity(dp: &DiscreteProblem, pt: &KktPoint, w: &GridField) -> Result<CoercivityReport> {
    coercivity_with(dp, pt, w, None)
}

/// As [`coercivity`], forcing the dense or the matrix-free path.
pub fn coercivity_with(
    dp: &DiscreteProblem,
    pt: &KktPoint,
    w: &GridField,
    method: Option<Method>,
) -> Result<CoercivityReport> {
    let h = ReducedHessian::new(dp, pt, w)?;
    report(&h, method)
}

fn report(h: &ReducedHessian, method: Option<Method>) -> Result<CoercivityReport> {
    let method = method.unwrap_or(if h.dim() <= DENSE_LIMIT {
        Method::Dense
    } else {
        Method::Iterative
    });
    let (alpha, scale, x) = match method {
        Method::Dense => dense_min(h)?,
        Method::Iterative => iterative_min(h, 0)?,
    };
    let alpha_tol = 1e-8 * scale;
    Ok(CoercivityReport {
        alpha,
        rho: h.coef.rho(),
        witness_v: h.witness(&x),
        method,
        alpha_tol,
        verdict: verdict(alpha, alpha_tol),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PerturbationReport {
    pub alpha: f64,
    pub min_alpha: f64,
    pub delta_phi: f64,
    pub delta_e: f64,
    pub trials: usize,
    /// `min_alpha >= alpha / 2`.
    pub half_retained: bool,
}

/// Minimum coercivity constant over multipliers `φ + δφ s dφ_k`,
/// `e + δe s de_k`, `s = ±1`, for `trials` fixed-seed directions with entries
/// in `[-1, 1]`. Antithetic pairs make the minimum nonincreasing in `δ`.
pub fn coercivity_under_multiplier_perturbation(
    dp: &DiscreteProblem,
    pt: &KktPoint,
    w: &GridField,
    delta_phi: f64,
    delta_e: f64,
    trials: usize,
    seed: u64,
) -> Result<PerturbationReport> {
    let base = coercivity_with(dp, pt, w, Some(Method::Dense))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lin = Linearization::new(dp, &pt.y, w)?;
    let mut min_alpha = base.alpha;
    let mesh = dp.mesh();
    for _ in 0..trials {
        let mut dphi = GridField::zeros(mesh);
        let mut de = GridField::zeros(mesh);
        for n in 1..mesh.levels() {
            for i in 0..mesh.nodes() {
                dphi.set(i, n, rng.gen_range(-1.0..1.0));
                de.set(i, n, rng.gen_range(-1.0..1.0));
            }
        }
        for s in [1.0, -1.0] {
            let mut q = pt.clone();
            q.phi = pt.phi.axpy(s * delta_phi, &dphi)?;
            q.e = pt.e.axpy(s * delta_e, &de)?;
            let h = ReducedHessian::with_coefficients(lin.clone(), FormCoefficients::new(dp, &q, w)?);
            min_alpha = min_alpha.min(dense_min(&h)?.0);
        }
    }
    Ok(PerturbationReport {
        alpha: base.alpha,
        min_alpha,
        delta_phi,
        delta_e,
        trials,
        half_retained: min_alpha >= 0.5 * base.alpha,
    })
}
