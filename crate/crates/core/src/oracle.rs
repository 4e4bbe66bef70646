//! Ground-truth generators: manufactured optimality systems, finite-difference
//! gradient checks and brute-force optimization of tiny instances.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::discrete::DiscreteProblem;
use crate::error::{Error, Result};
use crate::expr::{Point, ScalarFn2, VarSet};
use crate::grid::{GridField, MeshQ};
use crate::kkt::{kkt_residuals, KktPoint, KktResiduals, NcpKind};
use crate::model::{EllipticCoefficients, ParameterSource, ProblemSpec, SpatialDomain};
use crate::pde::{adjoint_source, solve_state, Linearization};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recipe {
    LqInactive,
    LqActiveBand,
    SemilinearBand,
}

impl Recipe {
    pub const ALL: [Recipe; 3] = [Recipe::LqInactive, Recipe::LqActiveBand, Recipe::SemilinearBand];
}

/// Shape constants of a manufactured case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecipeParams {
    /// Amplitude of `φ* = κ (1 - t)² sin(πx)`.
    pub kappa: f64,
    /// Height of `e* = β (x - ¼)(¾ - x)(1 + t)` on the band.
    pub beta: f64,
    /// Declared active band in `x`.
    pub band: [f64; 2],
}

impl Default for RecipeParams {
    fn default() -> Self {
        RecipeParams {
            kappa: 1.0,
            beta: 10.0,
            band: [0.25, 0.75],
        }
    }
}

/// A problem with known discrete-consistent optimality fields.
#[derive(Debug, Clone)]
pub struct ManufacturedCase {
    pub recipe: Recipe,
    pub spec: ProblemSpec,
    /// The parameter carrying the state source, equal to `spec`'s nominal one.
    pub w: GridField,
    pub exact: KktPoint,
    /// `e* > 0` at `(node, level)`, levels `1..=nt`.
    pub active: Vec<bool>,
}

const Y_STAR: &str = "(1 + t^2)*sin(pi*x)";

fn y_star(x: f64, t: f64) -> f64 {
    (1.0 + t * t) * (PI * x).sin()
}

fn y_star_t(x: f64, t: f64) -> f64 {
    2.0 * t * (PI * x).sin()
}

pub fn build_manufactured(recipe: Recipe, mesh: &MeshQ) -> Result<ManufacturedCase> {
    build_manufactured_with(recipe, RecipeParams::default(), mesh)
}

/// Builds `L = ½(y - y_d)² + ½(u - u_d)²`, `g = u - ψ` on the unit interval
/// with `a = 1`, `T = 1`, choosing `y_d`, `u_d`, `ψ` and the source `w` so
/// that `(y*, u*, φ*, e*)` satisfy the continuous optimality system.
pub fn build_manufactured_with(
    recipe: Recipe,
    params: RecipeParams,
    mesh: &MeshQ,
) -> Result<ManufacturedCase> {
    let RecipeParams { kappa, beta, band } = params;
    if mesh.domain != SpatialDomain::unit_interval() || mesh.horizon != 1.0 {
        return Err(Error::Recipe("manufactured cases live on (0,1) x (0,1)".into()));
    }
    if !(band[0] < band[1]) {
        return Err(Error::Recipe(format!("empty band {band:?}")));
    }
    let (f_text, fy_text) = match recipe {
        Recipe::SemilinearBand => (
            "y^3 + y*(t^4 + x^2)".to_string(),
            format!("(3*({Y_STAR})^2 + t^4 + x^2)"),
        ),
        _ => ("0".to_string(), "0".to_string()),
    };
    let phi = format!("{kappa}*(1 - t)^2*sin(pi*x)");
    // -φ_t + Aφ + f_y φ = y_d - y
    let y_d = format!(
        "{Y_STAR} + 2*{kappa}*(1 - t)*sin(pi*x) + pi^2*{phi} + {fy_text}*{phi}"
    );
    let u_d = "sin(pi*x)*cos(t)";
    let free = format!("{u_d} + {phi}");
    let bump = format!("(x - {})*({} - x)*(1 + t)", band[0], band[1]);
    let psi = match recipe {
        Recipe::LqInactive => format!("{free} + 1 + x^2"),
        _ => format!("{free} - {beta}*{bump}"),
    };
    let all = |s: &str| ScalarFn2::parse(s, VarSet::all());
    let spec_base = |parameter| {
        ProblemSpec::new(
            SpatialDomain::unit_interval(),
            1.0,
            EllipticCoefficients::identity(1),
            ScalarFn2::parse("sin(pi*x)", VarSet::space())?,
            all(&format!("0.5*(y - ({y_d}))^2 + 0.5*(u - ({u_d}))^2"))?,
            all(&f_text)?,
            all(&format!("u - ({psi})"))?,
            parameter,
        )
    };
    let probe = spec_base(ParameterSource::Constant(0.0))?;
    let free_fn = all(&free)?;
    let psi_fn = all(&psi)?;
    let at = |f: &ScalarFn2, x: f64, t: f64| f.eval(&Point::new([x, 0.0], t, 0.0, 0.0, 0.0));
    let e_star = |x: f64, t: f64| (at(&free_fn, x, t) - at(&psi_fn, x, t)).max(0.0);
    let u_star = |x: f64, t: f64| at(&free_fn, x, t).min(at(&psi_fn, x, t));

    if recipe != Recipe::LqInactive {
        // the multiplier must be positive inside the declared band
        for k in 1..64 {
            for t in [0.0, 0.5, 1.0] {
                let x = band[0] + (band[1] - band[0]) * k as f64 / 64.0;
                let gap = at(&free_fn, x, t) - at(&psi_fn, x, t);
                if !(gap > 0.0) {
                    return Err(Error::Recipe(format!(
                        "multiplier φ* - L_u = {gap:e} is not positive inside the band at x = {x}, t = {t}"
                    )));
                }
            }
        }
    }

    let w = GridField::from_fn(mesh, |x, t| {
        let (x0, y) = (x[0], y_star(x[0], t));
        let f = probe.nonlinearity.eval(&Point::new(x, t, y, 0.0, 0.0));
        y_star_t(x0, t) + PI * PI * y - u_star(x0, t) + f
    });
    let spec = spec_base(ParameterSource::Grid(w.clone()))?;
    let level0_zero = |g: GridField| {
        let mut g = g;
        g.level_mut(0).iter_mut().for_each(|v| *v = 0.0);
        g
    };
    let phi_fn = all(&phi)?;
    let exact = KktPoint::new(
        GridField::from_fn(mesh, |x, t| y_star(x[0], t)),
        level0_zero(GridField::from_fn(mesh, |x, t| u_star(x[0], t))),
        level0_zero(GridField::from_fn(mesh, |x, t| at(&phi_fn, x[0], t))),
        level0_zero(GridField::from_fn(mesh, |x, t| e_star(x[0], t))),
    )?;
    let active = exact.e.interior().iter().map(|v| *v > 0.0).collect();
    Ok(ManufacturedCase {
        recipe,
        spec,
        w,
        exact,
        active,
    })
}

impl ManufacturedCase {
    pub fn discrete(&self) -> DiscreteProblem {
        DiscreteProblem::on_mesh(self.spec.clone(), *self.w.mesh())
    }

    /// Residuals of the discrete optimality system at the sampled exact fields.
    pub fn exact_residuals(&self) -> Result<KktResiduals> {
        kkt_residuals(&self.discrete(), &self.exact, &self.w, NcpKind::Min)
    }
}

/// Reduced cost `u -> J(y(u), u, w)` with state solved at `u`.
pub fn reduced_cost(dp: &DiscreteProblem, u: &GridField, w: &GridField) -> Result<(f64, GridField)> {
    let (y, _) = solve_state(dp, u, w)?;
    Ok((dp.objective(&y, u, w), y))
}

/// `L_u - φ` with `φ` the adjoint for `e = 0`: the `L²(Q_h)` reduced gradient.
pub fn reduced_gradient(dp: &DiscreteProblem, u: &GridField, w: &GridField, y: &GridField) -> Result<GridField> {
    let zero = GridField::zeros(dp.mesh());
    let lin = Linearization::new(dp, y, w)?;
    let phi = lin.backward(&adjoint_source(dp, y, u, w, &zero)?)?;
    let mut grad = GridField::zeros(dp.mesh());
    for n in 1..dp.mesh().levels() {
        for i in 0..dp.nodes() {
            let lu = dp.l_derivs(i, n, y.at(i, n), u.at(i, n), w.at(i, n)).u;
            grad.set(i, n, lu - phi.at(i, n));
        }
    }
    Ok(grad)
}

fn require_inactive(dp: &DiscreteProblem, y: &GridField, u: &GridField, w: &GridField) -> Result<()> {
    let g = dp.constraint_field(y, u, w);
    for n in 1..dp.mesh().levels() {
        for i in 0..dp.nodes() {
            if !(g.at(i, n) < 0.0) {
                return Err(Error::ConstraintActive { node: i, level: n });
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct GradientCheck {
    pub max_rel_error: f64,
    /// `(adjoint, finite difference)` directional derivatives per direction.
    pub pairs: Vec<(f64, f64)>,
}

/// Compares `<L_u - φ, d>` with central differences of the reduced cost along
/// random directions of unit `L²(Q_h)` norm.
pub fn fd_gradient_check(
    dp: &DiscreteProblem,
    u: &GridField,
    w: &GridField,
    directions: usize,
    step: f64,
    seed: u64,
) -> Result<GradientCheck> {
    let (_, y) = reduced_cost(dp, u, w)?;
    require_inactive(dp, &y, u, w)?;
    let grad = reduced_gradient(dp, u, w, &y)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = GradientCheck {
        max_rel_error: 0.0,
        pairs: Vec::with_capacity(directions),
    };
    for _ in 0..directions {
        let mut d = GridField::zeros(dp.mesh());
        for n in 1..dp.mesh().levels() {
            for v in d.level_mut(n) {
                *v = rng.gen_range(-1.0..1.0);
            }
        }
        let norm = d.l2q();
        let d = d.scale(1.0 / norm);
        let probe = |s: f64| -> Result<f64> {
            let us = u.axpy(s, &d)?;
            let (j, ys) = reduced_cost(dp, &us, w)?;
            require_inactive(dp, &ys, &us, w)?;
            Ok(j)
        };
        let fd = (probe(step)? - probe(-step)?) / (2.0 * step);
        let ad = grad.inner(&d)?;
        let scale = ad.abs().max(fd.abs());
        let err = if scale == 0.0 { 0.0 } else { (ad - fd).abs() / scale };
        out.max_rel_error = out.max_rel_error.max(err);
        out.pairs.push((ad, fd));
    }
    Ok(out)
}

/// Moves `u` pointwise onto `g <= 0` with `y` frozen at the current state,
/// re-solving the state until no violation remains.
pub fn project_feasible(
    dp: &DiscreteProblem,
    u: &GridField,
    w: &GridField,
) -> Result<(GridField, GridField)> {
    let mut u = u.clone();
    for _ in 0..50 {
        let (y, _) = solve_state(dp, &u, w)?;
        let mut moved = false;
        for n in 1..dp.mesh().levels() {
            for i in 0..dp.nodes() {
                let (yv, wv) = (y.at(i, n), w.at(i, n));
                let mut uv = u.at(i, n);
                let mut d = dp.g_derivs(i, n, yv, uv, wv);
                if d.v <= 0.0 {
                    continue;
                }
                moved = true;
                let mut k = 0;
                while d.v > 0.0 {
                    if k == 60 || !(d.u.abs() >= 1e-12) {
                        return Err(Error::ProjectionFailure { node: i, level: n });
                    }
                    // overshoot slightly so the point lands strictly inside
                    uv -= d.v / d.u * (1.0 + 1e-12) + 1e-15 * d.u.signum();
                    d = dp.g_derivs(i, n, yv, uv, wv);
                    k += 1;
                }
                u.set(i, n, uv);
            }
        }
        if !moved {
            return Ok((u, y));
        }
    }
    Err(Error::ProjectionFailure { node: 0, level: 0 })
}

#[derive(Debug, Clone)]
pub struct BruteForceResult {
    pub u: GridField,
    pub y: GridField,
    pub objective: f64,
    /// Points `(node, level)` where `g > -tol` at the optimum.
    pub active: Vec<(usize, usize)>,
}

pub const BRUTE_FORCE_STARTS: usize = 20;

/// Multistart projected gradient descent for instances with at most 12
/// control unknowns. Requires `g = u - ψ(x, t)` up to a positive factor, so
/// that pointwise projection is exact.
pub fn brute_force_small(dp: &DiscreteProblem, w: &GridField, seed: u64) -> Result<BruteForceResult> {
    let mesh = dp.mesh();
    let unknowns = mesh.nodes() * mesh.nt;
    if unknowns > 12 {
        return Err(Error::InvalidProblem(format!(
            "brute force needs at most 12 control unknowns, got {unknowns}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<BruteForceResult> = None;
    for start in 0..BRUTE_FORCE_STARTS {
        let mut u0 = GridField::zeros(mesh);
        if start > 0 {
            for n in 1..mesh.levels() {
                for v in u0.level_mut(n) {
                    *v = rng.gen_range(-2.0..2.0);
                }
            }
        }
        let (mut u, mut y) = project_feasible(dp, &u0, w)?;
        let mut j = dp.objective(&y, &u, w);
        let mut step = 1.0;
        for _ in 0..20_000 {
            let grad = reduced_gradient(dp, &u, w, &y)?;
            let mut accepted = false;
            while step > 1e-12 {
                let (un, yn) = project_feasible(dp, &u.axpy(-step, &grad)?, w)?;
                let jn = dp.objective(&yn, &un, w);
                let moved = un.sub(&u)?;
                let decrease = grad.inner(&moved)?;
                if jn <= j + 1e-4 * decrease {
                    let change = moved.linf();
                    u = un;
                    y = yn;
                    j = jn;
                    accepted = change > 1e-13;
                    step = (step * 2.0).min(1e3);
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        if best.as_ref().is_none_or(|b| j < b.objective) {
            best = Some(BruteForceResult {
                u: u.clone(),
                y: y.clone(),
                objective: j,
                active: Vec::new(),
            });
        }
    }
    let mut best = best.expect("at least one start");
    let g = dp.constraint_field(&best.y, &best.u, w);
    for n in 1..mesh.levels() {
        for i in 0..mesh.nodes() {
            if g.at(i, n) > -1e-8 {
                best.active.push((i, n));
            }
        }
    }
    Ok(best)
}

#[derive(Debug, Clone)]
pub struct SmallInstance {
    pub name: String,
    pub spec: ProblemSpec,
    pub nx: usize,
    pub nt: usize,
}

/// Instances on every `(nx, nt)` in `{1, 2, 3}²` for the brute-force
/// comparison, all with `g = u - ψ`.
pub fn small_instances() -> Result<Vec<SmallInstance>> {
    use crate::fixtures;
    let families: Vec<(&str, ProblemSpec)> = vec![
        ("zero", fixtures::zero_lq()?),
        ("lq_inactive", fixtures::lq_inactive()?),
        ("lq_active", fixtures::lq("20*sin(pi*x)*t", "0.6 - 0.3*t")?),
        (
            "semilinear_active",
            fixtures::unit_problem(
                "sin(pi*x)",
                "0.5*(y - 12*sin(pi*x)*t)^2 + 0.5*u^2",
                "y^3 + y*(t^4 + x^2)",
                "u - 0.5",
                ParameterSource::Constant(0.0),
            )?,
        ),
    ];
    let mut out = Vec::new();
    for (name, spec) in families {
        for nx in 1..=3 {
            for nt in 1..=3 {
                out.push(SmallInstance {
                    name: format!("{name}_{nx}x{nt}"),
                    spec: spec.clone(),
                    nx,
                    nt,
                });
            }
        }
    }
    Ok(out)
}
