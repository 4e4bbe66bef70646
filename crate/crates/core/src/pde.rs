//! Implicit Euler solvers for the state, linearized state and adjoint equations.

use std::time::{Duration, Instant};

use serde::Serialize;

use crate::discrete::DiscreteProblem;
use crate::error::{Error, Result};
use crate::grid::{GridField, NormKind};
use crate::linalg::BandLu;

pub const NEWTON_TOL: f64 = 1e-12;
pub const NEWTON_MAX_ITERS: usize = 25;

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub newton_iters_max: usize,
    pub newton_iters_mean: f64,
    /// Largest final residual `|F|_inf / (1 + |rhs|_inf)` over all steps.
    pub residual: f64,
    #[serde(skip)]
    pub wall_time: Duration,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Solves the discrete state equation
/// `(y^n - y^{n-1})/tau + A y^n + f(t_n, y^n, w^n) = u^n + w^n`, `y^0 = y0`.
pub fn solve_state(
    dp: &DiscreteProblem,
    u: &GridField,
    w: &GridField,
) -> Result<(GridField, SolveReport)> {
    let start = Instant::now();
    let mesh = dp.mesh();
    mesh.check_same(u.mesh())?;
    mesh.check_same(w.mesh())?;
    let tau = mesh.tau();
    let nodes = mesh.nodes();
    let op = dp.op();
    let mut y = GridField::zeros(mesh);
    y.level_mut(0).copy_from_slice(&dp.initial_state());
    y.check_finite("initial state")?;

    let (mut iters_max, mut iters_sum, mut worst) = (0usize, 0usize, 0.0f64);
    let mut fy = vec![0.0; nodes];
    for n in 1..mesh.levels() {
        let rhs: Vec<f64> = (0..nodes)
            .map(|i| y.at(i, n - 1) + tau * (u.at(i, n) + w.at(i, n)))
            .collect();
        let tol = NEWTON_TOL * (1.0 + inf_norm(&rhs));
        let wn = w.level(n).to_vec();
        let residual = |z: &[f64], fy: Option<&mut [f64]>| -> Vec<f64> {
            let az = op.apply(z);
            let mut r = vec![0.0; nodes];
            let mut fy = fy;
            for i in 0..nodes {
                let d = dp.f_derivs(i, n, z[i], wn[i]);
                r[i] = z[i] + tau * (az[i] + d.v) - rhs[i];
                if let Some(fy) = fy.as_deref_mut() {
                    fy[i] = d.y;
                }
            }
            r
        };
        let mut z = y.level(n - 1).to_vec();
        let mut r = residual(&z, Some(&mut fy));
        let mut rn = inf_norm(&r);
        let mut it = 0;
        while !(rn <= tol) {
            if !rn.is_finite() {
                let node = r.iter().position(|v| !v.is_finite()).unwrap_or(0);
                return Err(Error::NonFinite {
                    what: "state residual",
                    node,
                    level: n,
                });
            }
            if it == NEWTON_MAX_ITERS {
                return Err(Error::NewtonDiverged {
                    step: n,
                    iters: it,
                    residual: rn,
                });
            }
            it += 1;
            let lu = op
                .step_matrix(tau, &fy)
                .factor()
                .map_err(|_| Error::SingularStep { step: n })?;
            let mut dz = r.clone();
            lu.solve_in_place(&mut dz);
            let mut lambda = 1.0;
            loop {
                let trial: Vec<f64> = z.iter().zip(&dz).map(|(a, d)| a - lambda * d).collect();
                let mut fy_trial = vec![0.0; nodes];
                let rt = residual(&trial, Some(&mut fy_trial));
                let rtn = inf_norm(&rt);
                if rtn < rn || lambda < 1e-6 {
                    z = trial;
                    r = rt;
                    rn = rtn;
                    fy = fy_trial;
                    break;
                }
                lambda *= 0.5;
            }
        }
        iters_max = iters_max.max(it);
        iters_sum += it;
        worst = worst.max(rn / (1.0 + inf_norm(&rhs)));
        y.level_mut(n).copy_from_slice(&z);
    }
    let steps = mesh.nt.max(1);
    Ok((
        y,
        SolveReport {
            newton_iters_max: iters_max,
            newton_iters_mean: iters_sum as f64 / steps as f64,
            residual: worst,
            wall_time: start.elapsed(),
        },
    ))
}

/// Factored step matrices `I + tau (A + f_y(t_n, y^n, w^n))` along a frozen
/// trajectory. Forward solves give the linearized state, backward solves the
/// exact transpose.
#[derive(Debug, Clone)]
pub struct Linearization {
    dp: DiscreteProblem,
    steps: Vec<BandLu>,
    fy: GridField,
}

impl Linearization {
    pub fn new(dp: &DiscreteProblem, y: &GridField, w: &GridField) -> Result<Self> {
        let mesh = dp.mesh();
        mesh.check_same(y.mesh())?;
        mesh.check_same(w.mesh())?;
        let mut fy = GridField::zeros(mesh);
        let mut steps = Vec::with_capacity(mesh.nt);
        for n in 1..mesh.levels() {
            for i in 0..mesh.nodes() {
                let d = dp.f_derivs(i, n, y.at(i, n), w.at(i, n));
                if !d.y.is_finite() {
                    return Err(Error::NonFinite {
                        what: "f_y",
                        node: i,
                        level: n,
                    });
                }
                fy.set(i, n, d.y);
            }
            let lu = dp
                .op()
                .step_matrix(mesh.tau(), fy.level(n))
                .factor()
                .map_err(|_| Error::SingularStep { step: n })?;
            steps.push(lu);
        }
        Ok(Linearization {
            dp: dp.clone(),
            steps,
            fy,
        })
    }

    pub fn problem(&self) -> &DiscreteProblem {
        &self.dp
    }

    /// `f_y` along the trajectory.
    pub fn fy(&self) -> &GridField {
        &self.fy
    }

    /// `zeta^0 = 0`, `(I + tau K^n) zeta^n = zeta^{n-1} + tau v^n`.
    pub fn forward(&self, v: &GridField) -> Result<GridField> {
        let mesh = self.dp.mesh();
        mesh.check_same(v.mesh())?;
        let tau = mesh.tau();
        let mut z = GridField::zeros(mesh);
        for n in 1..mesh.levels() {
            let mut b: Vec<f64> = z
                .level(n - 1)
                .iter()
                .zip(v.level(n))
                .map(|(p, s)| p + tau * s)
                .collect();
            self.steps[n - 1].solve_in_place(&mut b);
            z.level_mut(n).copy_from_slice(&b);
        }
        Ok(z)
    }

    /// `p^{nt+1} = 0`, `(I + tau K^n) p^n = p^{n+1} + tau r^n`; level 0 is zero.
    pub fn backward(&self, r: &GridField) -> Result<GridField> {
        let mesh = self.dp.mesh();
        mesh.check_same(r.mesh())?;
        let tau = mesh.tau();
        let mut p = GridField::zeros(mesh);
        let mut next = vec![0.0; mesh.nodes()];
        for n in (1..mesh.levels()).rev() {
            let mut b: Vec<f64> = next
                .iter()
                .zip(r.level(n))
                .map(|(q, s)| q + tau * s)
                .collect();
            self.steps[n - 1].solve_in_place(&mut b);
            p.level_mut(n).copy_from_slice(&b);
            next = b;
        }
        Ok(p)
    }
}

/// Linearized state `zeta` for source `v` around `(y_bar, w_bar)`.
pub fn solve_linearized(
    dp: &DiscreteProblem,
    y_bar: &GridField,
    w_bar: &GridField,
    v: &GridField,
) -> Result<GridField> {
    Linearization::new(dp, y_bar, w_bar)?.forward(v)
}

/// Adjoint state for source `-L_y - e g_y`.
pub fn solve_adjoint(
    dp: &DiscreteProblem,
    y: &GridField,
    u: &GridField,
    w: &GridField,
    e: &GridField,
) -> Result<GridField> {
    let lin = Linearization::new(dp, y, w)?;
    lin.backward(&adjoint_source(dp, y, u, w, e)?)
}

/// `-L_y - e g_y` on the lattice.
pub fn adjoint_source(
    dp: &DiscreteProblem,
    y: &GridField,
    u: &GridField,
    w: &GridField,
    e: &GridField,
) -> Result<GridField> {
    for f in [u, w, e] {
        y.check_mesh(f)?;
    }
    let mut r = GridField::zeros(dp.mesh());
    for n in 1..dp.mesh().levels() {
        for i in 0..dp.nodes() {
            let (yv, uv, wv) = (y.at(i, n), u.at(i, n), w.at(i, n));
            let ly = dp.l_derivs(i, n, yv, uv, wv).y;
            let gy = dp.g_derivs(i, n, yv, uv, wv).y;
            r.set(i, n, -ly - e.at(i, n) * gy);
        }
    }
    r.check_finite("adjoint source")?;
    Ok(r)
}

/// Graph-norm surrogate `|y|_W112 + |y|_inf + |δ_t y + A y|_L2`.
pub fn y_norm(dp: &DiscreteProblem, y: &GridField) -> Result<f64> {
    let op = dp.op();
    let w112 = y.norm(NormKind::W112, op)?;
    let graph = y.time_difference().add(&y.apply_operator(op)?)?.l2q();
    Ok(w112 + y.linf() + graph)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialKind {
    ControlOnly,
    ParameterOnly,
    Joint,
}

#[derive(Debug, Clone, Serialize)]
pub struct LipschitzTrial {
    pub kind: Option<TrialKind>,
    pub du: f64,
    pub dw: f64,
    pub dy: Option<f64>,
    /// `dy / (du + dw)`; `None` for zero distance or an invalid trial.
    pub ratio: Option<f64>,
    pub invalid: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LipschitzTable {
    pub trials: Vec<LipschitzTrial>,
    pub max_ratio: Option<f64>,
    pub max_control_only: Option<f64>,
    pub max_parameter_only: Option<f64>,
}

fn fmax(a: Option<f64>, b: f64) -> Option<f64> {
    Some(a.map_or(b, |a| a.max(b)))
}

/// Ratios `|y' - y|_Y / (|u' - u|_inf + |w' - w|_inf)` over trial inputs.
/// Trials outside the balls `B(u, r) x B(w, s)` or whose forward solve fails
/// are reported as invalid.
pub fn lipschitz_solution_map_check(
    dp: &DiscreteProblem,
    base: (&GridField, &GridField),
    trials: &[(GridField, GridField)],
    balls: Option<(f64, f64)>,
) -> Result<LipschitzTable> {
    let (u, w) = base;
    let (y, _) = solve_state(dp, u, w)?;
    let mut table = LipschitzTable {
        trials: Vec::with_capacity(trials.len()),
        max_ratio: None,
        max_control_only: None,
        max_parameter_only: None,
    };
    for (u2, w2) in trials {
        let du = u2.sub(u)?.linf();
        let dw = w2.sub(w)?.linf();
        let mut row = LipschitzTrial {
            kind: None,
            du,
            dw,
            dy: None,
            ratio: None,
            invalid: None,
        };
        if let Some((r, s)) = balls {
            if du > r || dw > s {
                row.invalid = Some(format!("outside balls: du={du:e} > {r:e} or dw={dw:e} > {s:e}"));
                table.trials.push(row);
                continue;
            }
        }
        if du + dw == 0.0 {
            table.trials.push(row);
            continue;
        }
        row.kind = Some(match (du > 0.0, dw > 0.0) {
            (true, false) => TrialKind::ControlOnly,
            (false, true) => TrialKind::ParameterOnly,
            _ => TrialKind::Joint,
        });
        match solve_state(dp, u2, w2).and_then(|(y2, _)| y_norm(dp, &y2.sub(&y)?)) {
            Ok(dy) => {
                let ratio = dy / (du + dw);
                row.dy = Some(dy);
                row.ratio = Some(ratio);
                table.max_ratio = fmax(table.max_ratio, ratio);
                match row.kind {
                    Some(TrialKind::ControlOnly) => {
                        table.max_control_only = fmax(table.max_control_only, ratio)
                    }
                    Some(TrialKind::ParameterOnly) => {
                        table.max_parameter_only = fmax(table.max_parameter_only, ratio)
                    }
                    _ => {}
                }
            }
            Err(e) => row.invalid = Some(e.to_string()),
        }
        table.trials.push(row);
    }
    Ok(table)
}
