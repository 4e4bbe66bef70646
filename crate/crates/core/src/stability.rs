//! Perturbation sweeps in the parameter `w`, quadratic growth sampling and the
//! Lagrangian gap inequality.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::discrete::DiscreteProblem;
use crate::error::{Error, Result};
use crate::grid::{GridField, MeshQ, NormKind};
use crate::kkt::{solve_ocp, KktPoint, NcpConfig};
use crate::oracle::project_feasible;
use crate::sosc::Verdict;

#[derive(Debug, Clone)]
pub struct Direction {
    pub name: String,
    pub field: GridField,
}

#[derive(Debug, Clone)]
pub struct SweepPlan {
    pub directions: Vec<Direction>,
    pub radii: Vec<f64>,
    pub warm_start: bool,
}

/// `0.1 * 2^-k` for `k = 0..count`.
pub fn default_radii(count: usize) -> Vec<f64> {
    (0..count).map(|k| 0.1 * 0.5f64.powi(k as i32)).collect()
}

/// Constant, separable sine and seeded `±1` directions, each with unit sup norm.
pub fn default_directions(mesh: &MeshQ, seed: u64) -> Vec<Direction> {
    let axes = mesh.domain.axes();
    let horizon = mesh.horizon;
    let mut sine = GridField::from_fn(mesh, |x, t| {
        let s: f64 = axes
            .iter()
            .enumerate()
            .map(|(k, [a, b])| (PI * (x[k] - a) / (b - a)).sin())
            .product();
        s * (PI * t / horizon).sin()
    });
    let peak = sine.linf();
    sine = sine.scale(1.0 / peak);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut random = GridField::zeros(mesh);
    for n in 1..mesh.levels() {
        for v in random.level_mut(n) {
            *v = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        }
    }
    let mut constant = GridField::constant(mesh, 1.0);
    constant.level_mut(0).iter_mut().for_each(|v| *v = 0.0);
    vec![
        Direction {
            name: "constant".into(),
            field: constant,
        },
        Direction {
            name: "sine".into(),
            field: sine,
        },
        Direction {
            name: "random".into(),
            field: random,
        },
    ]
}

impl SweepPlan {
    pub fn default_for(mesh: &MeshQ, seed: u64) -> Self {
        SweepPlan {
            directions: default_directions(mesh, seed),
            radii: default_radii(5),
            warm_start: true,
        }
    }

    pub fn validate(&self, mesh: &MeshQ) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidPlan(m));
        if self.directions.len() < 2 {
            return bad(format!("need at least 2 directions, got {}", self.directions.len()));
        }
        if self.radii.len() < 3 {
            return bad(format!("need at least 3 radii, got {}", self.radii.len()));
        }
        if self.radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return bad(format!("radii must be positive, got {:?}", self.radii));
        }
        if self.radii.windows(2).any(|p| p[1] >= p[0]) {
            return bad(format!("radii must be strictly decreasing, got {:?}", self.radii));
        }
        for d in &self.directions {
            mesh.check_same(d.field.mesh())?;
            let norm = d.field.linf();
            if (norm - 1.0).abs() > 1e-12 {
                return bad(format!("direction `{}` has sup norm {norm}, expected 1", d.name));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRecord {
    pub direction: String,
    pub radius: f64,
    pub du_l2: f64,
    pub dy_w112: f64,
    pub dphi_l2: f64,
    pub de_l2: f64,
    pub ratio_u: f64,
    pub ratio_y: f64,
    pub ratio_phi: f64,
    pub ratio_e: f64,
    pub iters: usize,
    /// `-∫ e_w g(ȳ, ū, w̄)`.
    pub lagrangian_gap: f64,
    /// `max |e g|` and `min e` at the perturbed solution.
    pub max_abs_eg: f64,
    pub min_e: f64,
    /// `None` when the solve succeeded.
    pub failure: Option<String>,
}

impl SweepRecord {
    pub fn is_valid(&self) -> bool {
        self.failure.is_none()
    }

    pub fn status(&self) -> &str {
        match &self.failure {
            None => "ok",
            Some(_) => "failed",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DirectionTrend {
    pub direction: String,
    /// Log-log slopes of the distances against the radius; `None` when a
    /// distance vanishes.
    pub slope_u: Option<f64>,
    pub slope_y: Option<f64>,
    pub slope_phi: Option<f64>,
    pub slope_e: Option<f64>,
}

impl DirectionTrend {
    pub fn slopes(&self) -> impl Iterator<Item = f64> + '_ {
        [self.slope_u, self.slope_y, self.slope_phi, self.slope_e]
            .into_iter()
            .flatten()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MultiplierStability {
    /// `max de / (du + ρ)`.
    pub m1_hat: f64,
    /// `max dφ / (du + ρ)`.
    pub m2_hat: f64,
    /// `M̂₁` restricted to each radius, in plan order.
    pub m1_by_radius: Vec<(f64, f64)>,
    /// `M̂₁` varies by at most a factor 2 between the two smallest radii.
    pub stable: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub k_lips_hat: f64,
    pub k_lips_multiplier_hat: f64,
    /// `(radius, K̂ at that radius, k̂ at that radius)`.
    pub by_radius: Vec<(f64, f64, f64)>,
    pub trends: Vec<DirectionTrend>,
    pub valid_records: usize,
    pub invalid_records: usize,
    pub min_lagrangian_gap: f64,
    pub sosc_verdict: Option<Verdict>,
    pub hypotheses_met: bool,
    pub slopes_within_band: bool,
    pub constants_stable: bool,
    pub multiplier: Option<MultiplierStability>,
}

/// `𝓛(ȳ,ū,φ,e,w̄) - 𝓛(ȳ,ū,φ_w,e_w,w̄) = -∫ e_w g(ȳ, ū, w̄)`.
pub fn lagrangian_gap_check(
    dp: &DiscreteProblem,
    base: &KktPoint,
    w_bar: &GridField,
    perturbed: &KktPoint,
) -> Result<f64> {
    dp.mesh().check_same(perturbed.mesh())?;
    let g = dp.constraint_field(&base.y, &base.u, w_bar);
    Ok(-perturbed.e.inner(&g)?)
}

fn slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(r, d)| *r > 0.0 && *d > 1e-300)
        .map(|(r, d)| (r.ln(), d.ln()))
        .collect();
    if pts.len() < 2 || pts.len() < points.len() {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

fn within_factor(a: f64, b: f64, factor: f64) -> bool {
    a > 0.0 && b > 0.0 && a.max(b) <= factor * a.min(b)
}

/// Solves `P(w̄ + ρ d)` for every direction and radius of `plan`.
pub fn perturbation_sweep(
    dp: &DiscreteProblem,
    base: &KktPoint,
    w_bar: &GridField,
    plan: &SweepPlan,
    cfg: &NcpConfig,
    sosc_verdict: Option<Verdict>,
) -> Result<(Vec<SweepRecord>, StabilityReport)> {
    plan.validate(dp.mesh())?;
    dp.mesh().check_same(base.mesh())?;
    let tasks: Vec<(&Direction, f64)> = plan
        .directions
        .iter()
        .flat_map(|d| plan.radii.iter().map(move |r| (d, *r)))
        .collect();
    let records: Vec<SweepRecord> = tasks
        .par_iter()
        .map(|(d, rho)| sweep_one(dp, base, w_bar, d, *rho, plan.warm_start, cfg))
        .collect();
    let report = summarize(&records, plan, sosc_verdict);
    Ok((records, report))
}

fn sweep_one(
    dp: &DiscreteProblem,
    base: &KktPoint,
    w_bar: &GridField,
    d: &Direction,
    rho: f64,
    warm: bool,
    cfg: &NcpConfig,
) -> SweepRecord {
    let mut rec = SweepRecord {
        direction: d.name.clone(),
        radius: rho,
        du_l2: f64::NAN,
        dy_w112: f64::NAN,
        dphi_l2: f64::NAN,
        de_l2: f64::NAN,
        ratio_u: f64::NAN,
        ratio_y: f64::NAN,
        ratio_phi: f64::NAN,
        ratio_e: f64::NAN,
        iters: 0,
        lagrangian_gap: f64::NAN,
        max_abs_eg: f64::NAN,
        min_e: f64::NAN,
        failure: None,
    };
    let result = (|| -> Result<()> {
        let w = w_bar.axpy(rho, &d.field)?;
        let pt = solve_ocp(dp, &w, warm.then_some(base), cfg)?;
        rec.du_l2 = pt.u.sub(&base.u)?.l2q();
        rec.dy_w112 = pt.y.sub(&base.y)?.norm(NormKind::W112, dp.op())?;
        rec.dphi_l2 = pt.phi.sub(&base.phi)?.l2q();
        rec.de_l2 = pt.e.sub(&base.e)?.l2q();
        rec.ratio_u = rec.du_l2 / rho;
        rec.ratio_y = rec.dy_w112 / rho;
        rec.ratio_phi = rec.dphi_l2 / rho;
        rec.ratio_e = rec.de_l2 / rho;
        rec.iters = pt.diagnostics.outer_iters;
        rec.max_abs_eg = pt.diagnostics.max_abs_eg;
        rec.min_e = pt.diagnostics.min_e;
        rec.lagrangian_gap = lagrangian_gap_check(dp, base, w_bar, &pt)?;
        Ok(())
    })();
    if let Err(e) = result {
        rec.failure = Some(e.to_string());
    }
    rec
}

fn summarize(records: &[SweepRecord], plan: &SweepPlan, sosc_verdict: Option<Verdict>) -> StabilityReport {
    let valid: Vec<&SweepRecord> = records.iter().filter(|r| r.is_valid()).collect();
    let primal = |r: &SweepRecord| (r.dy_w112 + r.du_l2) / r.radius;
    let dual = |r: &SweepRecord| (r.dphi_l2 + r.de_l2) / r.radius;
    let max_of = |it: &mut dyn Iterator<Item = f64>| it.fold(0.0f64, f64::max);
    let by_radius: Vec<(f64, f64, f64)> = plan
        .radii
        .iter()
        .map(|rho| {
            let at = || valid.iter().filter(|r| r.radius == *rho);
            (*rho, max_of(&mut at().map(|r| primal(r))), max_of(&mut at().map(|r| dual(r))))
        })
        .collect();
    let trends: Vec<DirectionTrend> = plan
        .directions
        .iter()
        .map(|d| {
            let rs: Vec<&&SweepRecord> = valid.iter().filter(|r| r.direction == d.name).collect();
            let s = |f: fn(&SweepRecord) -> f64| slope(&rs.iter().map(|r| (r.radius, f(r))).collect::<Vec<_>>());
            DirectionTrend {
                direction: d.name.clone(),
                slope_u: s(|r| r.du_l2),
                slope_y: s(|r| r.dy_w112),
                slope_phi: s(|r| r.dphi_l2),
                slope_e: s(|r| r.de_l2),
            }
        })
        .collect();
    let k = by_radius.len();
    let constants_stable = k >= 2
        && within_factor(by_radius[k - 1].1, by_radius[k - 2].1, 2.0)
        && within_factor(by_radius[k - 1].2, by_radius[k - 2].2, 2.0);
    let slopes_within_band = trends
        .iter()
        .all(|t| t.slopes().count() > 0 && t.slopes().all(|s| (0.9..=1.1).contains(&s)));
    StabilityReport {
        k_lips_hat: max_of(&mut valid.iter().map(|r| primal(r))),
        k_lips_multiplier_hat: max_of(&mut valid.iter().map(|r| dual(r))),
        by_radius,
        trends,
        valid_records: valid.len(),
        invalid_records: records.len() - valid.len(),
        min_lagrangian_gap: valid.iter().map(|r| r.lagrangian_gap).fold(f64::INFINITY, f64::min),
        sosc_verdict,
        hypotheses_met: sosc_verdict == Some(Verdict::Holds),
        slopes_within_band,
        constants_stable,
        multiplier: multiplier_stability_check(records).ok(),
    }
}

/// `M̂₁ = max de / (du + ρ)` and `M̂₂ = max dφ / (du + ρ)` over valid records.
pub fn multiplier_stability_check(records: &[SweepRecord]) -> Result<MultiplierStability> {
    let usable: Vec<&SweepRecord> = records
        .iter()
        .filter(|r| r.is_valid() && r.du_l2 + r.radius > 0.0)
        .collect();
    if usable.len() < 3 {
        return Err(Error::InsufficientRecords {
            valid: usable.len(),
            needed: 3,
        });
    }
    let m1 = |r: &SweepRecord| r.de_l2 / (r.du_l2 + r.radius);
    let m2 = |r: &SweepRecord| r.dphi_l2 / (r.du_l2 + r.radius);
    let mut radii: Vec<f64> = usable.iter().map(|r| r.radius).collect();
    radii.sort_by(|a, b| b.total_cmp(a));
    radii.dedup();
    let m1_by_radius: Vec<(f64, f64)> = radii
        .iter()
        .map(|rho| {
            let v = usable
                .iter()
                .filter(|r| r.radius == *rho)
                .map(|r| m1(r))
                .fold(0.0f64, f64::max);
            (*rho, v)
        })
        .collect();
    let k = m1_by_radius.len();
    let stable = k >= 2 && {
        let (a, b) = (m1_by_radius[k - 1].1, m1_by_radius[k - 2].1);
        (a == 0.0 && b == 0.0) || within_factor(a, b, 2.0)
    };
    Ok(MultiplierStability {
        m1_hat: usable.iter().map(|r| m1(r)).fold(0.0, f64::max),
        m2_hat: usable.iter().map(|r| m2(r)).fold(0.0, f64::max),
        m1_by_radius,
        stable,
    })
}

/// Tab-separated `radius distance` blocks per direction and distance, for log-log plots.
pub fn plot_data(records: &[SweepRecord]) -> String {
    let mut out = String::from("# direction quantity radius distance\n");
    let mut names: Vec<&str> = Vec::new();
    for r in records {
        if !names.contains(&r.direction.as_str()) {
            names.push(&r.direction);
        }
    }
    let quantities: [(&str, fn(&SweepRecord) -> f64); 4] = [
        ("du_l2", |r| r.du_l2),
        ("dy_w112", |r| r.dy_w112),
        ("dphi_l2", |r| r.dphi_l2),
        ("de_l2", |r| r.de_l2),
    ];
    for name in names {
        for (q, f) in quantities {
            for r in records.iter().filter(|r| r.direction == name && r.is_valid()) {
                writeln!(out, "{name}\t{q}\t{:?}\t{:?}", r.radius, f(r)).unwrap();
            }
            out.push('\n');
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct GrowthReport {
    pub kappa_hat: f64,
    pub violations: usize,
    pub samples: usize,
    /// Samples whose projected control equals the base control.
    pub excluded: usize,
    pub radius: f64,
}

/// Samples feasible `u'` in the sup-norm ball of `radius` around `ū` and
/// reports `min (J(u') - J(ū)) / |u' - ū|²` and the number of decreases
/// beyond `1e-10`.
pub fn growth_check(
    dp: &DiscreteProblem,
    base: &KktPoint,
    w_bar: &GridField,
    samples: usize,
    radius: f64,
    seed: u64,
) -> Result<GrowthReport> {
    let mesh = dp.mesh();
    let j0 = dp.objective(&base.y, &base.u, w_bar);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GrowthReport {
        kappa_hat: f64::INFINITY,
        violations: 0,
        samples,
        excluded: 0,
        radius,
    };
    for _ in 0..samples {
        let mut u = base.u.clone();
        for n in 1..mesh.levels() {
            for v in u.level_mut(n) {
                *v += radius * rng.gen_range(-1.0..1.0);
            }
        }
        let (u, y) = project_feasible(dp, &u, w_bar)?;
        let dist = u.sub(&base.u)?.l2q();
        if dist == 0.0 {
            report.excluded += 1;
            continue;
        }
        let gain = dp.objective(&y, &u, w_bar) - j0;
        if gain < -1e-10 {
            report.violations += 1;
        }
        report.kappa_hat = report.kappa_hat.min(gain / (dist * dist));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::pde::Linearization;
    use crate::sosc::coercivity;
    use nalgebra::{DMatrix, DVector};

    fn solved(spec: crate::model::ProblemSpec, nx: usize, nt: usize) -> (DiscreteProblem, GridField, KktPoint) {
        let dp = DiscreteProblem::new(spec, nx, nt).unwrap();
        let w = dp.nominal_parameter().unwrap();
        let pt = solve_ocp(&dp, &w, None, &NcpConfig::default()).unwrap();
        (dp, w, pt)
    }

    #[test]
    fn plan_validation() {
        let mesh = MeshQ::new(crate::model::SpatialDomain::unit_interval(), 1.0, 4, 4).unwrap();
        let mut plan = SweepPlan::default_for(&mesh, 0);
        assert!(plan.validate(&mesh).is_ok());
        plan.radii = vec![0.1, 0.05, 0.0];
        assert!(matches!(plan.validate(&mesh), Err(Error::InvalidPlan(_))));
        plan.radii = vec![0.1, 0.2, 0.05];
        assert!(plan.validate(&mesh).is_err());
        let mut plan = SweepPlan::default_for(&mesh, 0);
        plan.directions.truncate(1);
        assert!(plan.validate(&mesh).is_err());
        let mut plan = SweepPlan::default_for(&mesh, 0);
        plan.directions[0].field = plan.directions[0].field.scale(2.0);
        assert!(plan.validate(&mesh).is_err());
    }

    #[test]
    fn default_directions_have_unit_sup_norm() {
        let mesh = MeshQ::new(crate::model::SpatialDomain::unit_interval(), 2.0, 7, 9).unwrap();
        for d in default_directions(&mesh, 3) {
            assert!((d.field.linf() - 1.0).abs() < 1e-15, "{}", d.name);
        }
    }

    #[test]
    fn zero_perturbation_returns_base() {
        let (dp, w, base) = solved(fixtures::example_semilinear().unwrap(), 8, 8);
        let cfg = NcpConfig::default();
        let again = solve_ocp(&dp, &w, Some(&base), &cfg).unwrap();
        for (a, b) in [(&again.u, &base.u), (&again.phi, &base.phi), (&again.e, &base.e)] {
            assert!(a.sub(b).unwrap().l2q() <= 10.0 * cfg.kkt_tol);
        }
        assert!(again.y.sub(&base.y).unwrap().norm(NormKind::W112, dp.op()).unwrap() <= 10.0 * cfg.kkt_tol);
    }

    #[test]
    fn linear_fixture_ratios_are_constant_and_symmetric() {
        let (dp, w, base) = solved(fixtures::lq_inactive().unwrap(), 8, 8);
        let mut plan = SweepPlan::default_for(dp.mesh(), 1);
        let mut neg = plan.directions[2].clone();
        neg.name = "negated".into();
        neg.field = neg.field.scale(-1.0);
        plan.directions.push(neg);
        let (records, report) = perturbation_sweep(&dp, &base, &w, &plan, &NcpConfig::default(), None).unwrap();
        assert_eq!(report.valid_records, 20);
        for d in &plan.directions {
            let rs: Vec<&SweepRecord> = records.iter().filter(|r| r.direction == d.name).collect();
            for r in &rs {
                assert!((r.ratio_u - rs[0].ratio_u).abs() <= 1e-6 * rs[0].ratio_u);
            }
        }
        for (a, b) in records[10..15].iter().zip(&records[15..20]) {
            assert!((a.du_l2 - b.du_l2).abs() <= 1e-8);
        }
        // one dense linear solve predicts the control sensitivity
        let mesh = *dp.mesh();
        let lin = Linearization::new(&dp, &base.y, &w).unwrap();
        let n = mesh.nodes() * mesh.nt;
        let mut s = DMatrix::zeros(n, n);
        for k in 0..n {
            let mut e = GridField::zeros(&mesh);
            e.values_mut()[mesh.nodes() + k] = 1.0;
            s.set_column(k, &DVector::from_column_slice(lin.forward(&e).unwrap().interior()));
        }
        let d = DVector::from_column_slice(plan.directions[1].field.interior());
        let du = -(s.transpose() * &s + DMatrix::identity(n, n)).lu().solve(&(s.transpose() * &s * d)).unwrap();
        let expect = du.norm() * mesh.weight().sqrt();
        assert!((records[5].ratio_u - expect).abs() <= 1e-6 * expect);
    }

    #[test]
    fn lq_multiplier_ratio_matches_fixed_active_set_sensitivity() {
        let (dp, w, base) = solved(fixtures::lq_active().unwrap(), 8, 8);
        let plan = SweepPlan::default_for(dp.mesh(), 2);
        let (records, _) = perturbation_sweep(&dp, &base, &w, &plan, &NcpConfig::default(), None).unwrap();
        let m = multiplier_stability_check(&records).unwrap();

        let mesh = *dp.mesh();
        let lin = Linearization::new(&dp, &base.y, &w).unwrap();
        let n = mesh.nodes() * mesh.nt;
        let mut s = DMatrix::zeros(n, n);
        for k in 0..n {
            let mut e = GridField::zeros(&mesh);
            e.values_mut()[mesh.nodes() + k] = 1.0;
            s.set_column(k, &DVector::from_column_slice(lin.forward(&e).unwrap().interior()));
        }
        let g = dp.constraint_field(&base.y, &base.u, &w);
        let active: Vec<bool> = g.interior().iter().map(|v| *v > -1e-8).collect();
        let free: Vec<usize> = (0..n).filter(|k| !active[*k]).collect();
        let h = s.transpose() * &s + DMatrix::identity(n, n);
        let h_ii = DMatrix::from_fn(free.len(), free.len(), |a, b| h[(free[a], free[b])]);
        let lu = h_ii.lu();
        let mut closed = 0.0f64;
        for d in &plan.directions {
            let d = DVector::from_column_slice(d.field.interior());
            let rhs = s.transpose() * &s * &d;
            let rhs_i = DVector::from_fn(free.len(), |a, _| -rhs[free[a]]);
            let du_i = lu.solve(&rhs_i).unwrap();
            let mut du = DVector::zeros(n);
            for (a, k) in free.iter().enumerate() {
                du[*k] = du_i[a];
            }
            let grad = s.transpose() * (&s * (&du + &d));
            let de = DVector::from_fn(n, |k, _| if active[k] { grad[k] } else { 0.0 });
            let sw = mesh.weight().sqrt();
            closed = closed.max(de.norm() * sw / (du.norm() * sw + 1.0));
        }
        assert!(closed > 0.0);
        assert!((m.m1_hat - closed).abs() <= 0.05 * closed, "{} {closed}", m.m1_hat);
    }

    #[test]
    fn example_sweep_is_lipschitz() {
        let (dp, w, base) = solved(fixtures::example_semilinear().unwrap(), 16, 16);
        let verdict = coercivity(&dp, &base, &w).unwrap().verdict;
        let plan = SweepPlan::default_for(dp.mesh(), 0);
        let (records, report) = perturbation_sweep(&dp, &base, &w, &plan, &NcpConfig::default(), Some(verdict)).unwrap();
        assert_eq!(report.invalid_records, 0);
        assert!(report.hypotheses_met);
        assert!(report.slopes_within_band, "{:?}", report.trends);
        assert!(report.constants_stable, "{:?}", report.by_radius);
        assert!(report.min_lagrangian_gap >= -1e-10);
        let m = multiplier_stability_check(&records).unwrap();
        assert!(m.stable && m.m1_hat.is_finite());
    }

    #[test]
    fn sweep_is_deterministic() {
        let (dp, w, base) = solved(fixtures::example_semilinear().unwrap(), 6, 6);
        let plan = SweepPlan::default_for(dp.mesh(), 4);
        let run = || {
            let (r, rep) = perturbation_sweep(&dp, &base, &w, &plan, &NcpConfig::default(), None).unwrap();
            serde_json::to_string(&(r, rep)).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn lagrangian_gap_cases() {
        let (dp, w, base) = solved(fixtures::lq_active().unwrap(), 6, 6);
        let mut zero_e = base.clone();
        zero_e.e = GridField::zeros(dp.mesh());
        assert_eq!(lagrangian_gap_check(&dp, &base, &w, &zero_e).unwrap(), 0.0);
        // multipliers supported where the base constraint is exactly active
        assert!(lagrangian_gap_check(&dp, &base, &w, &base).unwrap().abs() <= 1e-14);
    }

    #[test]
    fn insufficient_records() {
        let rec = SweepRecord {
            direction: "d".into(),
            radius: 0.0,
            du_l2: 0.0,
            dy_w112: 0.0,
            dphi_l2: 0.0,
            de_l2: 0.0,
            ratio_u: f64::NAN,
            ratio_y: f64::NAN,
            ratio_phi: f64::NAN,
            ratio_e: f64::NAN,
            iters: 0,
            lagrangian_gap: 0.0,
            max_abs_eg: 0.0,
            min_e: 0.0,
            failure: None,
        };
        assert!(matches!(
            multiplier_stability_check(&vec![rec; 4]),
            Err(Error::InsufficientRecords { valid: 0, needed: 3 })
        ));
    }

    #[test]
    fn growth_on_convex_fixture_and_negative_control() {
        let (dp, w, base) = solved(fixtures::lq_active().unwrap(), 6, 6);
        let alpha = coercivity(&dp, &base, &w).unwrap().alpha;
        let g = growth_check(&dp, &base, &w, 200, 1e-2, 0).unwrap();
        assert_eq!(g.violations, 0);
        assert!(g.kappa_hat >= 0.45 * alpha, "{} {alpha}", g.kappa_hat);

        let mut off = base.clone();
        off.u = base.u.map(|v| v - 0.3);
        let (y, _) = crate::pde::solve_state(&dp, &off.u, &w).unwrap();
        off.y = y;
        let bad = growth_check(&dp, &off, &w, 50, 1e-2, 0).unwrap();
        assert!(bad.violations > 0);
    }

    #[test]
    fn plot_data_has_a_block_per_quantity() {
        let (dp, w, base) = solved(fixtures::lq_inactive().unwrap(), 4, 4);
        let plan = SweepPlan::default_for(dp.mesh(), 0);
        let (records, _) = perturbation_sweep(&dp, &base, &w, &plan, &NcpConfig::default(), None).unwrap();
        let text = plot_data(&records);
        assert_eq!(text.lines().filter(|l| l.starts_with("sine\tdu_l2")).count(), 5);
    }
}
