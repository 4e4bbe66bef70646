//! Acceptance criteria, run in order with one PASS/FAIL line each.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use paracon::config::ProblemFile;
use paracon::discrete::DiscreteProblem;
use paracon::fixtures;
use paracon::grid::{GridField, MeshQ};
use paracon::kkt::{solve_ocp, KktPoint, NcpConfig};
use paracon::model::{ParameterSource, SpatialDomain};
use paracon::oracle::{brute_force_small, build_manufactured, fd_gradient_check, small_instances, Recipe};
use paracon::pde::{solve_state, Linearization};
use paracon::sosc::{coercivity, coercivity_with, Method};
use paracon::stability::{growth_check, multiplier_stability_check, perturbation_sweep, SweepPlan, SweepRecord};
use paracon_cli::run_config::MeshSection;
use paracon_cli::{cmd_sweep, RunConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

/// Converged points and sweep records seen by earlier criteria.
#[derive(Default)]
struct Suite {
    points: Vec<(String, f64, f64)>,
    records: Vec<SweepRecord>,
}

impl Suite {
    fn point(&mut self, name: &str, pt: &KktPoint) {
        self.points
            .push((name.into(), pt.diagnostics.max_abs_eg, pt.diagnostics.min_e));
    }
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn unit_mesh(nx: usize, nt: usize) -> MeshQ {
    MeshQ::new(SpatialDomain::unit_interval(), 1.0, nx, nt).unwrap()
}

fn kkt_exactness(suite: &mut Suite) -> Outcome {
    let start = Instant::now();
    let case = build_manufactured(Recipe::LqActiveBand, &unit_mesh(16, 16)).map_err(err)?;
    let dp = case.discrete();
    let pt = solve_ocp(&dp, &case.w, None, &NcpConfig::default()).map_err(err)?;
    let secs = start.elapsed().as_secs_f64();
    suite.point("manufactured lq_active_band", &pt);
    let r = pt.residuals;
    let active: Vec<bool> = pt.e.interior().iter().map(|v| *v > 0.0).collect();
    let same = active == case.active;
    let n_active = case.active.iter().filter(|a| **a).count();
    check(
        r.max() <= 1e-9 && same && secs < 10.0,
        format!(
            "residuals state {:.1e} adjoint {:.1e} stat {:.1e} comp {:.1e}; active set {} ({n_active} points); {secs:.2} s",
            r.state,
            r.adjoint,
            r.stationarity,
            r.complementarity,
            if same { "recovered" } else { "differs" }
        ),
    )
}

fn random_field(mesh: &MeshQ, rng: &mut ChaCha8Rng) -> GridField {
    let mut f = GridField::zeros(mesh);
    for n in 1..mesh.levels() {
        for v in f.level_mut(n) {
            *v = rng.gen_range(-1.0..1.0);
        }
    }
    f
}

fn adjoint_correctness(_: &mut Suite) -> Outcome {
    let dp = DiscreteProblem::new(fixtures::example_semilinear().map_err(err)?, 12, 10).map_err(err)?;
    let w = dp.nominal_parameter().map_err(err)?;
    let u = GridField::constant(dp.mesh(), -1.0);
    let (y, _) = solve_state(&dp, &u, &w).map_err(err)?;
    let lin = Linearization::new(&dp, &y, &w).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let v = random_field(dp.mesh(), &mut rng);
        let r = random_field(dp.mesh(), &mut rng);
        let lhs = lin.forward(&v).map_err(err)?.inner(&r).map_err(err)?;
        let rhs = v.inner(&lin.backward(&r).map_err(err)?).map_err(err)?;
        worst = worst.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()));
    }
    let g = fd_gradient_check(&dp, &u, &w, 10, 1e-5, 0).map_err(err)?;
    check(
        worst <= 1e-12 && g.max_rel_error <= 1e-5,
        format!(
            "transpose identity max rel {worst:.1e} over 20 pairs; gradient check max rel {:.1e}",
            g.max_rel_error
        ),
    )
}

fn heat_error(nx: usize, nt: usize, exact: impl Fn(f64, usize) -> f64) -> Result<f64, String> {
    let spec = fixtures::unit_problem("sin(pi*x)", "0.5*y^2 + 0.5*u^2", "0", "u - 1", ParameterSource::Constant(0.0))
        .map_err(err)?;
    let dp = DiscreteProblem::new(spec, nx, nt).map_err(err)?;
    let z = GridField::zeros(dp.mesh());
    let (y, _) = solve_state(&dp, &z, &z).map_err(err)?;
    let mut e = 0.0f64;
    for n in 0..dp.mesh().levels() {
        for i in 0..dp.nodes() {
            e = e.max((y.at(i, n) - exact(dp.coord(i)[0], n)).abs());
        }
    }
    Ok(e)
}

fn order(sizes: &[f64], errs: &[f64]) -> f64 {
    let k = sizes.len() - 1;
    (errs[0] / errs[k]).ln() / (sizes[0] / sizes[k]).ln()
}

fn convergence_order(_: &mut Suite) -> Outcome {
    let nts = [32, 64, 128];
    let taus: Vec<f64> = nts.iter().map(|n| 1.0 / *n as f64).collect();
    let errs = nts
        .iter()
        .map(|&nt| heat_error(400, nt, |x, n| (-PI * PI * n as f64 / nt as f64).exp() * (PI * x).sin()))
        .collect::<Result<Vec<_>, _>>()?;
    let p_tau = order(&taus, &errs);
    let nt = 200;
    let tau = 1.0 / nt as f64;
    let nxs = [8, 16, 32];
    let hs: Vec<f64> = nxs.iter().map(|n| 1.0 / (*n as f64 + 1.0)).collect();
    let errs = nxs
        .iter()
        .map(|&nx| heat_error(nx, nt, |x, n| (1.0 + tau * PI * PI).powi(-(n as i32)) * (PI * x).sin()))
        .collect::<Result<Vec<_>, _>>()?;
    let p_h = order(&hs, &errs);
    let mut ok = p_tau >= 0.9 && p_h >= 1.8;
    let mut detail = format!("heat kernel order tau {p_tau:.2}, h {p_h:.2}; manufactured");
    for recipe in Recipe::ALL {
        let res = |nx, nt| -> Result<f64, String> {
            let r = build_manufactured(recipe, &unit_mesh(nx, nt))
                .and_then(|c| c.exact_residuals())
                .map_err(err)?;
            Ok(r.state.max(r.adjoint))
        };
        let rt = [res(255, 4)?, res(255, 8)?, res(255, 16)?];
        let rh = [res(7, 4096)?, res(15, 4096)?, res(31, 4096)?];
        let mt = order(&[4.0, 8.0, 16.0].map(|n: f64| 1.0 / n), &rt);
        let mh = order(&[8.0, 16.0, 32.0].map(|n: f64| 1.0 / n), &rh);
        ok &= mt >= 0.9 && mh >= 1.8;
        detail += &format!(" {recipe:?} tau {mt:.2} h {mh:.2};");
    }
    check(ok, detail.trim_end_matches(';').into())
}

fn oracle_equivalence(suite: &mut Suite) -> Outcome {
    let mut worst = 0.0f64;
    let mut mismatched = Vec::new();
    let instances = small_instances().map_err(err)?;
    for inst in &instances {
        let dp = DiscreteProblem::new(inst.spec.clone(), inst.nx, inst.nt).map_err(err)?;
        let w = dp.nominal_parameter().map_err(err)?;
        let bf = brute_force_small(&dp, &w, 7).map_err(err)?;
        let pt = solve_ocp(&dp, &w, None, &NcpConfig::default()).map_err(err)?;
        suite.point(&inst.name, &pt);
        let j = pt.diagnostics.objective;
        let rel = if j == bf.objective {
            0.0
        } else {
            (j - bf.objective).abs() / j.abs().max(bf.objective.abs())
        };
        worst = worst.max(rel);
        if pt.active_set(0.0) != bf.active {
            mismatched.push(format!("{} {}x{}", inst.name, inst.nx, inst.nt));
        }
    }
    check(
        worst <= 1e-6 && mismatched.is_empty(),
        format!(
            "{} instances, max relative objective gap {worst:.1e}, active-set mismatches {mismatched:?}",
            instances.len()
        ),
    )
}

fn sosc_machinery(suite: &mut Suite) -> Outcome {
    let dp = DiscreteProblem::new(fixtures::lq_active().map_err(err)?, 10, 10).map_err(err)?;
    let w = dp.nominal_parameter().map_err(err)?;
    let pt = solve_ocp(&dp, &w, None, &NcpConfig::default()).map_err(err)?;
    suite.point("lq_active 10x10", &pt);
    let dense = coercivity_with(&dp, &pt, &w, Some(Method::Dense)).map_err(err)?;
    let iter = coercivity_with(&dp, &pt, &w, Some(Method::Iterative)).map_err(err)?;
    let gap = (dense.alpha - iter.alpha).abs();

    let dpc = DiscreteProblem::new(fixtures::concave_control().map_err(err)?, 10, 10).map_err(err)?;
    let wc = dpc.nominal_parameter().map_err(err)?;
    let ptc = solve_ocp(&dpc, &wc, None, &NcpConfig::default()).map_err(err)?;
    suite.point("concave control 10x10", &ptc);
    let neg = coercivity(&dpc, &ptc, &wc).map_err(err)?;
    check(
        dense.alpha >= 1.0 && dense.rho == 1.0 && gap <= 1e-8 && neg.rho == -1.0 && neg.alpha < 0.0,
        format!(
            "LQ alpha {:.6} rho {}, dense vs iterative {gap:.1e}; concave control alpha {:.3} rho {}",
            dense.alpha, dense.rho, neg.alpha, neg.rho
        ),
    )
}

fn example_sweep() -> Result<(DiscreteProblem, GridField, KktPoint, SweepPlan), String> {
    let dp = DiscreteProblem::new(fixtures::example_semilinear().map_err(err)?, 16, 16).map_err(err)?;
    let w = dp.nominal_parameter().map_err(err)?;
    let base = solve_ocp(&dp, &w, None, &NcpConfig::default()).map_err(err)?;
    let plan = SweepPlan::default_for(dp.mesh(), 0);
    Ok((dp, w, base, plan))
}

fn lipschitz_stability(suite: &mut Suite) -> Outcome {
    let start = Instant::now();
    let (dp, w, base, plan) = example_sweep()?;
    suite.point("example base", &base);
    let verdict = coercivity(&dp, &base, &w).map_err(err)?.verdict;
    let (records, report) =
        perturbation_sweep(&dp, &base, &w, &plan, &NcpConfig::default(), Some(verdict)).map_err(err)?;
    let secs = start.elapsed().as_secs_f64();
    let slopes: Vec<f64> = report.trends.iter().flat_map(|t| t.slopes()).collect();
    let (lo, hi) = slopes
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), s| (a.min(*s), b.max(*s)));
    let k = report.by_radius.len();
    let ok = report.invalid_records == 0
        && slopes.len() == 12
        && report.slopes_within_band
        && report.constants_stable
        && secs < 300.0;
    suite.records.extend(records);
    check(
        ok,
        format!(
            "{} records, slopes in [{lo:.3}, {hi:.3}], K {:.3} -> {:.3}, k {:.3} -> {:.3}, sosc {verdict:?}; {secs:.1} s",
            report.valid_records,
            report.by_radius[k - 2].1,
            report.by_radius[k - 1].1,
            report.by_radius[k - 2].2,
            report.by_radius[k - 1].2
        ),
    )
}

/// Conjugate gradients for the LQ reduced Hessian `S*S + I` restricted to the
/// inactive set.
fn restricted_solve(lin: &Linearization, free: &[bool], b: &GridField) -> Result<GridField, String> {
    let mask = |f: &GridField| {
        let mut g = f.clone();
        let nodes = f.mesh().nodes();
        for (k, v) in g.values_mut().iter_mut().enumerate() {
            if k < nodes || !free[k - nodes] {
                *v = 0.0;
            }
        }
        g
    };
    let apply = |v: &GridField| -> Result<GridField, String> {
        let sv = lin.forward(v).map_err(err)?;
        Ok(mask(&lin.backward(&sv).map_err(err)?.add(v).map_err(err)?))
    };
    let b = mask(b);
    let mut x = GridField::zeros(b.mesh());
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rr = r.inner(&r).map_err(err)?;
    let stop = 1e-28 * rr.max(f64::MIN_POSITIVE);
    for _ in 0..500 {
        if rr <= stop {
            break;
        }
        let ap = apply(&p)?;
        let a = rr / p.inner(&ap).map_err(err)?;
        x = x.axpy(a, &p).map_err(err)?;
        r = r.axpy(-a, &ap).map_err(err)?;
        let next = r.inner(&r).map_err(err)?;
        p = r.axpy(next / rr, &p).map_err(err)?;
        rr = next;
    }
    Ok(x)
}

fn multiplier_stability(suite: &mut Suite) -> Outcome {
    let m = multiplier_stability_check(&suite.records).map_err(err)?;

    let dp = DiscreteProblem::new(fixtures::lq_active().map_err(err)?, 12, 12).map_err(err)?;
    let w = dp.nominal_parameter().map_err(err)?;
    let base = solve_ocp(&dp, &w, None, &NcpConfig::default()).map_err(err)?;
    suite.point("lq_active 12x12", &base);
    let plan = SweepPlan::default_for(dp.mesh(), 1);
    let (records, _) = perturbation_sweep(&dp, &base, &w, &plan, &NcpConfig::default(), None).map_err(err)?;
    let lq = multiplier_stability_check(&records).map_err(err)?;
    suite.records.extend(records);

    let lin = Linearization::new(&dp, &base.y, &w).map_err(err)?;
    let g = dp.constraint_field(&base.y, &base.u, &w);
    let free: Vec<bool> = g.interior().iter().map(|v| *v <= -1e-8).collect();
    let nodes = dp.nodes();
    let mut closed = 0.0f64;
    for d in &plan.directions {
        let sd = lin.backward(&lin.forward(&d.field).map_err(err)?).map_err(err)?;
        let du = restricted_solve(&lin, &free, &sd.scale(-1.0))?;
        let grad = lin
            .backward(&lin.forward(&du.add(&d.field).map_err(err)?).map_err(err)?)
            .map_err(err)?;
        let mut de = grad;
        for (k, v) in de.values_mut().iter_mut().enumerate() {
            if k < nodes || free[k - nodes] {
                *v = 0.0;
            }
        }
        closed = closed.max(de.l2q() / (du.l2q() + 1.0));
    }
    let rel = (lq.m1_hat - closed).abs() / closed;
    check(
        m.stable && m.m1_hat.is_finite() && rel <= 0.05,
        format!(
            "example M1 {:.4} (smallest radii {:.4} / {:.4}); LQ M1 {:.6} vs closed form {closed:.6} (rel {rel:.1e})",
            m.m1_hat,
            m.m1_by_radius[m.m1_by_radius.len() - 2].1,
            m.m1_by_radius[m.m1_by_radius.len() - 1].1,
            lq.m1_hat
        ),
    )
}

fn quadratic_growth(suite: &mut Suite) -> Outcome {
    let dp = DiscreteProblem::new(fixtures::lq_active().map_err(err)?, 8, 8).map_err(err)?;
    let w = dp.nominal_parameter().map_err(err)?;
    let base = solve_ocp(&dp, &w, None, &NcpConfig::default()).map_err(err)?;
    suite.point("lq_active 8x8", &base);
    let alpha = coercivity(&dp, &base, &w).map_err(err)?.alpha;
    let g = growth_check(&dp, &base, &w, 200, 1e-2, 0).map_err(err)?;

    let mut off = base.clone();
    off.u = base.u.map(|v| v - 0.3);
    off.y = solve_state(&dp, &off.u, &w).map_err(err)?.0;
    let bad = growth_check(&dp, &off, &w, 200, 1e-2, 0).map_err(err)?;
    check(
        g.kappa_hat >= 0.45 * alpha && g.violations == 0 && bad.violations > 0,
        format!(
            "kappa {:.4} >= 0.45 alpha = {:.4}, violations {}; non-optimal control violations {}",
            g.kappa_hat,
            0.45 * alpha,
            g.violations,
            bad.violations
        ),
    )
}

fn complementarity(suite: &mut Suite) -> Outcome {
    let records = suite.records.iter().filter(|r| r.is_valid());
    let mut worst_eg = 0.0f64;
    let mut min_e = f64::INFINITY;
    let mut count = 0;
    for (_, eg, e) in &suite.points {
        worst_eg = worst_eg.max(*eg);
        min_e = min_e.min(*e);
        count += 1;
    }
    let mut min_gap = f64::INFINITY;
    for r in records {
        worst_eg = worst_eg.max(r.max_abs_eg);
        min_e = min_e.min(r.min_e);
        min_gap = min_gap.min(r.lagrangian_gap);
        count += 1;
    }
    let invalid = suite.records.iter().filter(|r| !r.is_valid()).count();
    check(
        worst_eg <= 1e-9 && min_e >= -1e-9 && min_gap >= -1e-10 && invalid == 0,
        format!(
            "{count} converged points: max |e g| {worst_eg:.1e}, min e {min_e:.1e}; min Lagrangian gap {min_gap:.1e} over {} records",
            suite.records.len()
        ),
    )
}

fn reproducibility(_: &mut Suite) -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    let spec = fixtures::example_semilinear().map_err(err)?;
    let problem = ProblemFile::from_spec(&spec, None).and_then(|p| p.to_toml()).map_err(err)?;
    fs::write(dir.path().join("problem.toml"), problem).map_err(err)?;
    let run = |out: &str| -> Result<(), String> {
        let config = RunConfig {
            problem: Some("problem.toml".into()),
            seed: 11,
            out: dir.path().join(out),
            mesh: MeshSection { nx: 10, nt: 10 },
            base_dir: dir.path().to_path_buf(),
            ..RunConfig::default()
        };
        cmd_sweep(config, None).map_err(err)
    };
    run("first")?;
    run("second")?;
    let read = |run: &str, f: &str| fs::read(Path::new(dir.path()).join(run).join(f)).map_err(err);
    let mut same = Vec::new();
    for f in ["sweep.csv", "sweep.json", "sweep_plot.dat"] {
        if read("first", f)? != read("second", f)? {
            return Err(format!("{f} differs between runs"));
        }
        same.push(f);
    }
    Ok(format!("{} byte-identical across two runs (seed 11)", same.join(", ")))
}

fn main() -> ExitCode {
    type Criterion = fn(&mut Suite) -> Outcome;
    let criteria: [(&str, Criterion); 10] = [
        ("KKT exactness", kkt_exactness),
        ("Adjoint correctness", adjoint_correctness),
        ("Convergence order", convergence_order),
        ("Oracle equivalence", oracle_equivalence),
        ("SOSC machinery", sosc_machinery),
        ("Lipschitz stability", lipschitz_stability),
        ("Multiplier stability", multiplier_stability),
        ("Quadratic growth", quadratic_growth),
        ("Complementarity and positivity", complementarity),
        ("Reproducibility", reproducibility),
    ];
    let mut suite = Suite::default();
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        match run(&mut suite) {
            Ok(detail) => println!("PASS {:>2}. {name}: {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2}. {name}: {detail}", k + 1);
            }
        }
    }
    println!("{} of {} acceptance criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
