//! First-order optimality system of the discrete problem and its semismooth
//! Newton solver.
//!
//! Unknowns `(y, u, φ, e)` live on levels `1..=nt`. They are interleaved per
//! lattice point so the Newton matrix is banded with half-bandwidth `4N`,
//! `N` the number of spatial nodes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::discrete::DiscreteProblem;
use crate::error::{Error, Result};
use crate::expr::Derivs;
use crate::grid::{read_grid_field, write_grid_field, GridField, MeshQ};
use crate::linalg::BandMatrix;
use crate::model::{audit_h1, audit_h4};
use crate::pde::{solve_adjoint, solve_state};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NcpKind {
    Min,
    FischerBurmeister,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NcpConfig {
    pub ncp_kind: NcpKind,
    /// Complementarity scaling `c` in `e - max(0, e + c g)`.
    pub c: f64,
    pub kkt_tol: f64,
    pub max_outer_iters: usize,
    /// Armijo constant of the merit decrease test.
    pub armijo: f64,
    /// Smallest accepted step length.
    pub min_step: f64,
}

impl Default for NcpConfig {
    fn default() -> Self {
        NcpConfig {
            ncp_kind: NcpKind::Min,
            c: 1.0,
            kkt_tol: 1e-10,
            max_outer_iters: 50,
            armijo: 1e-4,
            min_step: 2f64.powi(-20),
        }
    }
}

impl NcpConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.c > 0.0
            && self.kkt_tol > 0.0
            && self.max_outer_iters > 0
            && self.armijo > 0.0
            && self.armijo < 0.5
            && self.min_step > 0.0
            && self.min_step < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid solver settings {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    pub state: f64,
    pub adjoint: f64,
    pub stationarity: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.state
            .max(self.adjoint)
            .max(self.stationarity)
            .max(self.complementarity)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub outer_iters: usize,
    pub merit_history: Vec<f64>,
    pub objective_history: Vec<f64>,
    pub step_history: Vec<f64>,
    pub h4_gamma0: f64,
    pub h4_margin_min: f64,
    pub objective: f64,
    /// `max |e g|` over the lattice.
    pub max_abs_eg: f64,
    pub min_e: f64,
    pub active_points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KktPoint {
    pub y: GridField,
    pub u: GridField,
    pub phi: GridField,
    pub e: GridField,
    pub residuals: KktResiduals,
    pub diagnostics: SolveDiagnostics,
}

#[derive(Serialize, Deserialize)]
struct PointRecord {
    mesh: MeshQ,
    residuals: KktResiduals,
    diagnostics: SolveDiagnostics,
    config: Option<NcpConfig>,
}

impl KktPoint {
    /// A point with residuals left at zero; call [`kkt_residuals`] to fill them.
    pub fn new(y: GridField, u: GridField, phi: GridField, e: GridField) -> Result<Self> {
        for f in [&u, &phi, &e] {
            y.check_mesh(f)?;
        }
        Ok(KktPoint {
            y,
            u,
            phi,
            e,
            residuals: KktResiduals::default(),
            diagnostics: SolveDiagnostics::default(),
        })
    }

    pub fn mesh(&self) -> &MeshQ {
        self.y.mesh()
    }

    /// Writes `y.grid`, `u.grid`, `phi.grid`, `e.grid` and `diagnostics.json`.
    pub fn save(&self, dir: &Path, config: Option<&NcpConfig>) -> Result<()> {
        fs::create_dir_all(dir)?;
        for (name, f) in self.fields() {
            write_grid_field(&dir.join(format!("{name}.grid")), f)?;
        }
        let rec = PointRecord {
            mesh: *self.mesh(),
            residuals: self.residuals,
            diagnostics: self.diagnostics.clone(),
            config: config.copied(),
        };
        fs::write(dir.join("diagnostics.json"), serde_json::to_string_pretty(&rec)? + "\n")?;
        Ok(())
    }

    /// Reads the four field files written by [`KktPoint::save`].
    pub fn load(dir: &Path, mesh: &MeshQ) -> Result<Self> {
        let read = |name: &str| read_grid_field(&dir.join(format!("{name}.grid")), mesh);
        let mut p = KktPoint::new(read("y")?, read("u")?, read("phi")?, read("e")?)?;
        if let Ok(text) = fs::read_to_string(dir.join("diagnostics.json")) {
            let rec: PointRecord = serde_json::from_str(&text)?;
            p.residuals = rec.residuals;
            p.diagnostics = rec.diagnostics;
        }
        Ok(p)
    }

    pub fn fields(&self) -> [(&'static str, &GridField); 4] {
        [("y", &self.y), ("u", &self.u), ("phi", &self.phi), ("e", &self.e)]
    }

    /// Lattice points of levels `1..=nt` with `e > 0`, as `(node, level)`.
    pub fn active_set(&self, tol: f64) -> Vec<(usize, usize)> {
        let m = self.mesh();
        let mut out = Vec::new();
        for n in 1..m.levels() {
            for i in 0..m.nodes() {
                if self.e.at(i, n) > tol {
                    out.push((i, n));
                }
            }
        }
        out
    }
}

/// `e = (φ - L_u) / g_u` pointwise on levels `1..=nt`; no sign projection.
pub fn recover_multiplier(
    dp: &DiscreteProblem,
    y: &GridField,
    u: &GridField,
    w: &GridField,
    phi: &GridField,
) -> Result<GridField> {
    for f in [u, w, phi] {
        y.check_mesh(f)?;
    }
    let mut e = GridField::zeros(dp.mesh());
    for n in 1..dp.mesh().levels() {
        for i in 0..dp.nodes() {
            let (yv, uv, wv) = (y.at(i, n), u.at(i, n), w.at(i, n));
            let gu = dp.g_derivs(i, n, yv, uv, wv).u;
            if !(gu.abs() >= 1e-12) {
                return Err(Error::DegenerateConstraint {
                    node: i,
                    level: n,
                    value: gu.abs(),
                });
            }
            let lu = dp.l_derivs(i, n, yv, uv, wv).u;
            e.set(i, n, (phi.at(i, n) - lu) / gu);
        }
    }
    Ok(e)
}

/// Complementarity function value and its partials in `(e, g)`.
/// Ties at the kink take the inactive branch.
fn ncp(kind: NcpKind, c: f64, e: f64, g: f64) -> (f64, f64, f64) {
    match kind {
        NcpKind::Min => {
            if e + c * g > 0.0 {
                (-c * g, 0.0, -c)
            } else {
                (e, 1.0, 0.0)
            }
        }
        NcpKind::FischerBurmeister => {
            let (a, b) = (e, -c * g);
            let r = a.hypot(b);
            if r == 0.0 {
                (0.0, 1.0, 0.0)
            } else {
                (a + b - r, 1.0 - a / r, -c * (1.0 - b / r))
            }
        }
    }
}

struct PointData {
    f: Derivs,
    l: Derivs,
    g: Derivs,
}

/// Stacked residual of the optimality system together with pointwise data.
struct Evaluation {
    r: Vec<f64>,
    data: Vec<PointData>,
}

fn evaluate(
    dp: &DiscreteProblem,
    pt: &KktPoint,
    w: &GridField,
    cfg: &NcpConfig,
) -> Result<Evaluation> {
    let mesh = dp.mesh();
    let (nodes, nt, tau) = (mesh.nodes(), mesh.nt, mesh.tau());
    let op = dp.op();
    let mut r = vec![0.0; 4 * nodes * nt];
    let mut data = Vec::with_capacity(nodes * nt);
    for n in 1..=nt {
        let ay = op.apply(pt.y.level(n));
        let aphi = op.apply(pt.phi.level(n));
        for i in 0..nodes {
            let (y, u, wv) = (pt.y.at(i, n), pt.u.at(i, n), w.at(i, n));
            let (phi, e) = (pt.phi.at(i, n), pt.e.at(i, n));
            let f = dp.f_derivs(i, n, y, wv);
            let l = dp.l_derivs(i, n, y, u, wv);
            let g = dp.g_derivs(i, n, y, u, wv);
            let phi_next = if n < nt { pt.phi.at(i, n + 1) } else { 0.0 };
            let k = 4 * ((n - 1) * nodes + i);
            r[k] = (y - pt.y.at(i, n - 1)) / tau + ay[i] + f.v - u - wv;
            r[k + 1] = l.u - phi + e * g.u;
            r[k + 2] = (phi - phi_next) / tau + aphi[i] + f.y * phi + l.y + e * g.y;
            r[k + 3] = ncp(cfg.ncp_kind, cfg.c, e, g.v).0;
            data.push(PointData { f, l, g });
        }
    }
    if let Some(k) = r.iter().position(|v| !v.is_finite()) {
        let p = k / 4;
        return Err(Error::NonFinite {
            what: "optimality residual",
            node: p % nodes,
            level: p / nodes + 1,
        });
    }
    Ok(Evaluation { r, data })
}

fn reported(dp: &DiscreteProblem, pt: &KktPoint, ev: &Evaluation, kind: NcpKind) -> KktResiduals {
    let mesh = dp.mesh();
    let weight = mesh.weight();
    let l2 = |field: usize| {
        (ev.r.iter().skip(field).step_by(4).map(|v| v * v).sum::<f64>() * weight).sqrt()
    };
    let mut comp = 0.0f64;
    for (p, d) in ev.data.iter().enumerate() {
        let (i, n) = (p % mesh.nodes(), p / mesh.nodes() + 1);
        let e = pt.e.at(i, n);
        let v = match kind {
            NcpKind::Min => e.min(-d.g.v),
            NcpKind::FischerBurmeister => ncp(kind, 1.0, e, d.g.v).0,
        };
        comp = comp.max(v.abs());
    }
    KktResiduals {
        state: l2(0),
        adjoint: l2(2),
        stationarity: l2(1),
        complementarity: comp,
    }
}

/// Residuals of the discrete optimality system at `pt`: `L²(Q_h)` norms of the
/// state, adjoint and stationarity equations and `max |min(e, -g)|` (or the
/// Fischer-Burmeister value).
pub fn kkt_residuals(
    dp: &DiscreteProblem,
    pt: &KktPoint,
    w: &GridField,
    kind: NcpKind,
) -> Result<KktResiduals> {
    dp.mesh().check_same(pt.mesh())?;
    dp.mesh().check_same(w.mesh())?;
    let cfg = NcpConfig {
        ncp_kind: kind,
        ..NcpConfig::default()
    };
    let ev = evaluate(dp, pt, w, &cfg)?;
    Ok(reported(dp, pt, &ev, kind))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct H4Margin {
    pub margin: f64,
    pub threshold: f64,
    /// `margin < gamma0 / 2`.
    pub flagged: bool,
}

/// `min |g_u|` along `(y, u, w)` compared with half the nominal `gamma0`.
pub fn h4_margin(dp: &DiscreteProblem, pt: &KktPoint, w: &GridField, gamma0: f64) -> Result<H4Margin> {
    let margin = audit_h4(dp.spec(), &pt.y, &pt.u, w)?;
    let threshold = 0.5 * gamma0;
    Ok(H4Margin {
        margin,
        threshold,
        flagged: margin < threshold,
    })
}

/// Cold start: `u = 0`, the matching state, the adjoint with `e = 0`, then
/// `e = max(0, (φ - L_u)/g_u)`.
pub fn cold_start(dp: &DiscreteProblem, w: &GridField) -> Result<KktPoint> {
    let mesh = dp.mesh();
    let u = GridField::zeros(mesh);
    let (y, _) = solve_state(dp, &u, w)?;
    let zero = GridField::zeros(mesh);
    let phi = solve_adjoint(dp, &y, &u, w, &zero)?;
    let e = recover_multiplier(dp, &y, &u, w, &phi)?.map(|v| v.max(0.0));
    KktPoint::new(y, u, phi, e)
}

fn jacobian(
    dp: &DiscreteProblem,
    pt: &KktPoint,
    ev: &Evaluation,
    cfg: &NcpConfig,
) -> BandMatrix {
    let mesh = dp.mesh();
    let (nodes, nt, tau) = (mesh.nodes(), mesh.nt, mesh.tau());
    let op = dp.op();
    let band = (4 * nodes).max(4 * op.bandwidth() + 3);
    let mut jac = BandMatrix::zeros(4 * nodes * nt, band, band);
    let idx = |i: usize, n: usize, field: usize| 4 * ((n - 1) * nodes + i) + field;
    for n in 1..=nt {
        for i in 0..nodes {
            let d = &ev.data[(n - 1) * nodes + i];
            let (phi, e) = (pt.phi.at(i, n), pt.e.at(i, n));
            let (ry, ru, rp, re) = (idx(i, n, 0), idx(i, n, 1), idx(i, n, 2), idx(i, n, 3));
            let (y, u, p, m) = (ry, ru, rp, re);
            for &(j, a) in op.row(i) {
                jac.add(ry, idx(j, n, 0), a);
                jac.add(rp, idx(j, n, 2), a);
            }
            // state
            jac.add(ry, y, 1.0 / tau + d.f.y);
            if n > 1 {
                jac.add(ry, idx(i, n - 1, 0), -1.0 / tau);
            }
            jac.add(ry, u, -1.0);
            // stationarity
            jac.add(ru, y, d.l.yu + e * d.g.yu);
            jac.add(ru, u, d.l.uu + e * d.g.uu);
            jac.add(ru, p, -1.0);
            jac.add(ru, m, d.g.u);
            // adjoint
            jac.add(rp, p, 1.0 / tau + d.f.y);
            if n < nt {
                jac.add(rp, idx(i, n + 1, 2), -1.0 / tau);
            }
            jac.add(rp, y, d.f.yy * phi + d.l.yy + e * d.g.yy);
            jac.add(rp, u, d.l.yu + e * d.g.yu);
            jac.add(rp, m, d.g.y);
            // complementarity
            let (_, de, dg) = ncp(cfg.ncp_kind, cfg.c, e, d.g.v);
            jac.add(re, m, de);
            if dg != 0.0 {
                jac.add(re, y, dg * d.g.y);
                jac.add(re, u, dg * d.g.u);
            }
        }
    }
    jac
}

fn apply_step(pt: &KktPoint, dx: &[f64], lambda: f64) -> KktPoint {
    let mesh = *pt.mesh();
    let nodes = mesh.nodes();
    let mut out = pt.clone();
    for n in 1..=mesh.nt {
        for i in 0..nodes {
            let k = 4 * ((n - 1) * nodes + i);
            out.y.set(i, n, pt.y.at(i, n) + lambda * dx[k]);
            out.u.set(i, n, pt.u.at(i, n) + lambda * dx[k + 1]);
            out.phi.set(i, n, pt.phi.at(i, n) + lambda * dx[k + 2]);
            out.e.set(i, n, pt.e.at(i, n) + lambda * dx[k + 3]);
        }
    }
    out
}

fn merit(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

fn finish(dp: &DiscreteProblem, mut pt: KktPoint, w: &GridField, ev: &Evaluation, cfg: &NcpConfig) -> KktPoint {
    pt.residuals = reported(dp, &pt, ev, cfg.ncp_kind);
    let mesh = dp.mesh();
    let (mut eg, mut min_e, mut active) = (0.0f64, f64::INFINITY, 0);
    for (p, d) in ev.data.iter().enumerate() {
        let e = pt.e.at(p % mesh.nodes(), p / mesh.nodes() + 1);
        eg = eg.max((e * d.g.v).abs());
        min_e = min_e.min(e);
        if e > cfg.kkt_tol {
            active += 1;
        }
    }
    pt.diagnostics.max_abs_eg = eg;
    pt.diagnostics.min_e = min_e;
    pt.diagnostics.active_points = active;
    pt.diagnostics.objective = dp.objective(&pt.y, &pt.u, w);
    pt
}

/// Semismooth Newton on the optimality system of `P(w)`, started from `init`
/// or from [`cold_start`].
pub fn solve_ocp(
    dp: &DiscreteProblem,
    w: &GridField,
    init: Option<&KktPoint>,
    cfg: &NcpConfig,
) -> Result<KktPoint> {
    cfg.validate()?;
    let mesh = dp.mesh();
    mesh.check_same(w.mesh())?;
    let h1 = audit_h1(&dp.spec().coeffs, &dp.spec().domain, 16, 0)?;
    if !(h1 > 0.0) {
        return Err(Error::Hypothesis(format!("ellipticity constant {h1:e} is not positive")));
    }
    let mut pt = match init {
        Some(p) => {
            mesh.check_same(p.mesh())?;
            let mut p = p.clone();
            p.y.level_mut(0).copy_from_slice(&dp.initial_state());
            p.diagnostics = SolveDiagnostics::default();
            p
        }
        None => cold_start(dp, w).map_err(|e| match e {
            Error::DegenerateConstraint { .. } => Error::Hypothesis(e.to_string()),
            e => e,
        })?,
    };
    let gamma0 = audit_h4(dp.spec(), &pt.y, &pt.u, w)?;
    if !(gamma0 >= 1e-12) {
        return Err(Error::Hypothesis(format!(
            "min |g_u| = {gamma0:e} at the initial iterate"
        )));
    }
    let mut diag = SolveDiagnostics {
        h4_gamma0: gamma0,
        h4_margin_min: gamma0,
        ..SolveDiagnostics::default()
    };
    let mut ev = evaluate(dp, &pt, w, cfg)?;
    let mut m = merit(&ev.r);
    diag.merit_history.push(m);
    diag.objective_history.push(dp.objective(&pt.y, &pt.u, w));
    for iter in 0..=cfg.max_outer_iters {
        let res = reported(dp, &pt, &ev, cfg.ncp_kind);
        if res.max() <= cfg.kkt_tol {
            diag.outer_iters = iter;
            pt.diagnostics = diag;
            return Ok(finish(dp, pt, w, &ev, cfg));
        }
        if iter == cfg.max_outer_iters {
            return Err(Error::MaxOuterIters {
                iters: iter,
                residual: res.max(),
            });
        }
        let lu = jacobian(dp, &pt, &ev, cfg).factor()?;
        let mut dx: Vec<f64> = ev.r.iter().map(|v| -v).collect();
        lu.solve_in_place(&mut dx);
        let mut lambda = 1.0;
        let (next, next_ev, next_m) = loop {
            let trial = apply_step(&pt, &dx, lambda);
            if let Ok(tev) = evaluate(dp, &trial, w, cfg) {
                let tm = merit(&tev.r);
                if tm <= (1.0 - 2.0 * cfg.armijo * lambda) * m {
                    break (trial, tev, tm);
                }
            }
            lambda *= 0.5;
            if lambda < cfg.min_step {
                return Err(Error::LineSearchStall {
                    iter,
                    residual: res.max(),
                });
            }
        };
        let margin = h4_margin(dp, &next, w, gamma0)?;
        diag.h4_margin_min = diag.h4_margin_min.min(margin.margin);
        if margin.flagged {
            return Err(Error::H4Margin {
                iter: iter + 1,
                margin: margin.margin,
                threshold: margin.threshold,
            });
        }
        pt = next;
        ev = next_ev;
        m = next_m;
        diag.step_history.push(lambda);
        diag.merit_history.push(m);
        diag.objective_history.push(dp.objective(&pt.y, &pt.u, w));
    }
    unreachable!("loop returns on convergence or iteration limit")
}
