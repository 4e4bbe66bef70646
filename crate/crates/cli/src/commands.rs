use std::fs;
use std::path::{Path, PathBuf};

use paracon::config::{load_problem, ProblemFile};
use paracon::discrete::DiscreteProblem;
use paracon::grid::{write_grid_field, GridField, MeshQ};
use paracon::kkt::{kkt_residuals, solve_ocp, KktPoint, KktResiduals};
use paracon::model::audit_h4;
use paracon::oracle::{build_manufactured, fd_gradient_check, Recipe};
use paracon::sosc::{coercivity, Verdict};
use paracon::stability::{perturbation_sweep, plot_data};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::report::{sweep_csv, write_json, Provenance};
use crate::run_config::RunConfig;

/// A loaded problem on the configured mesh.
pub struct Session {
    pub config: RunConfig,
    pub problem: ProblemFile,
    pub dp: DiscreteProblem,
    pub w: GridField,
}

impl Session {
    pub fn open(config: RunConfig) -> CliResult<Self> {
        config.validate(true)?;
        let path = config.problem_path().expect("validated");
        let problem = ProblemFile::load(&path)?;
        let spec = load_problem(&path)?;
        let dp = DiscreteProblem::new(spec, config.mesh.nx, config.mesh.nt)?;
        let w = dp.nominal_parameter()?;
        config.prepare_out()?;
        Ok(Session { config, problem, dp, w })
    }

    pub fn mesh(&self) -> MeshQ {
        *self.dp.mesh()
    }

    fn provenance<'a>(&'a self, command: &'a str) -> Provenance<'a> {
        Provenance::new(command, self.mesh(), &self.config, Some(&self.problem))
    }

    fn out(&self, name: &str) -> PathBuf {
        self.config.out.join(name)
    }

    fn load_warm(&self, warm: Option<&Path>) -> CliResult<Option<KktPoint>> {
        warm.map(|dir| KktPoint::load(dir, self.dp.mesh()).map_err(CliError::from))
            .transpose()
    }

    fn solve(&self, warm: Option<&Path>) -> CliResult<KktPoint> {
        let init = self.load_warm(warm)?;
        solve_ocp(&self.dp, &self.w, init.as_ref(), &self.config.solver).map_err(CliError::Solver)
    }
}

#[derive(Debug, Serialize)]
struct SolveSummary<'a> {
    converged: bool,
    objective: f64,
    outer_iters: usize,
    residuals: KktResiduals,
    active_points: usize,
    min_e: f64,
    max_abs_eg: f64,
    h4_margin_min: f64,
    point: &'a str,
}

fn summarize(pt: &KktPoint, dir: &'static str) -> SolveSummary<'static> {
    let d = &pt.diagnostics;
    SolveSummary {
        converged: true,
        objective: d.objective,
        outer_iters: d.outer_iters,
        residuals: pt.residuals,
        active_points: d.active_points,
        min_e: d.min_e,
        max_abs_eg: d.max_abs_eg,
        h4_margin_min: d.h4_margin_min,
        point: dir,
    }
}

/// Solves the configured problem and writes the point and `solve.json`.
pub fn cmd_solve(config: RunConfig, warm: Option<&Path>) -> CliResult<()> {
    let s = Session::open(config)?;
    let pt = s.solve(warm)?;
    pt.save(&s.config.out, Some(&s.config.solver))?;
    let summary = summarize(&pt, ".");
    write_json(&s.out("solve.json"), &s.provenance("solve"), &summary)?;
    println!(
        "converged in {} iterations: J = {:e}, residual = {:e}, active points = {}",
        summary.outer_iters,
        summary.objective,
        pt.residuals.max(),
        summary.active_points
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct SweepDocument<'a> {
    base: SolveSummary<'static>,
    report: &'a paracon::stability::StabilityReport,
    flags: Vec<&'static str>,
    records: &'a [paracon::stability::SweepRecord],
}

/// Base solve, coercivity verdict and the perturbation sweep.
pub fn cmd_sweep(config: RunConfig, warm: Option<&Path>) -> CliResult<()> {
    let s = Session::open(config)?;
    let plan = s.config.sweep_plan(s.dp.mesh())?;
    let base = s.solve(warm)?;
    base.save(&s.out("base"), Some(&s.config.solver))?;
    let verdict = coercivity(&s.dp, &base, &s.w).map_err(CliError::Solver)?.verdict;
    let (records, report) = perturbation_sweep(&s.dp, &base, &s.w, &plan, &s.config.solver, Some(verdict))?;
    let prov = s.provenance("sweep");
    fs::write(s.out("sweep.csv"), sweep_csv(&prov, &records)?)?;
    fs::write(s.out("sweep_plot.dat"), prov.comment_lines()? + &plot_data(&records))?;
    let mut flags = Vec::new();
    if !report.hypotheses_met {
        flags.push("hypotheses unmet");
    }
    let doc = SweepDocument {
        base: summarize(&base, "base"),
        report: &report,
        flags,
        records: &records,
    };
    write_json(&s.out("sweep.json"), &prov, &doc)?;
    println!(
        "sweep: {} valid / {} records, K = {:e}, k = {:e}, sosc {:?}",
        report.valid_records,
        records.len(),
        report.k_lips_hat,
        report.k_lips_multiplier_hat,
        verdict
    );
    if report.invalid_records > 0 {
        return Err(CliError::PartialSweep {
            valid: report.valid_records,
            total: records.len(),
        });
    }
    Ok(())
}

/// Coercivity of the second-order form at the solved point.
pub fn cmd_sosc(config: RunConfig, warm: Option<&Path>) -> CliResult<()> {
    let s = Session::open(config)?;
    let pt = s.solve(warm)?;
    let rep = coercivity(&s.dp, &pt, &s.w).map_err(CliError::Solver)?;
    write_json(&s.out("sosc.json"), &s.provenance("sosc"), &rep)?;
    println!(
        "alpha = {:e}, rho = {:e}, method {:?}, verdict {:?}",
        rep.alpha, rep.rho, rep.method, rep.verdict
    );
    if rep.verdict == Verdict::Fails {
        return Err(CliError::Verification(format!("coercivity fails: alpha = {:e}", rep.alpha)));
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct VerifyReport {
    threshold: f64,
    residuals: KktResiduals,
    min_e: f64,
    gamma0: f64,
    alpha: f64,
    rho: f64,
    verdict: Verdict,
    failures: Vec<String>,
}

/// Residuals, uniform regularity and coercivity of the point stored in `point_dir`.
pub fn cmd_verify(config: RunConfig, point_dir: &Path) -> CliResult<()> {
    let s = Session::open(config)?;
    let pt = KktPoint::load(point_dir, s.dp.mesh())?;
    let kind = s.config.solver.ncp_kind;
    let residuals = kkt_residuals(&s.dp, &pt, &s.w, kind).map_err(CliError::Solver)?;
    let gamma0 = audit_h4(s.dp.spec(), &pt.y, &pt.u, &s.w)?;
    let sosc = coercivity(&s.dp, &pt, &s.w).map_err(CliError::Solver)?;
    let threshold = s.config.verify.threshold(s.dp.mesh());
    let min_e = pt.e.interior().iter().copied().fold(f64::INFINITY, f64::min);
    let mut failures = Vec::new();
    for (name, v) in [
        ("state", residuals.state),
        ("adjoint", residuals.adjoint),
        ("stationarity", residuals.stationarity),
        ("complementarity", residuals.complementarity),
    ] {
        println!("{name:>15} residual {v:e}");
        if !(v <= threshold) {
            failures.push(format!("{name} residual {v:e} > {threshold:e}"));
        }
    }
    if !(min_e >= -threshold) {
        failures.push(format!("min e = {min_e:e} < -{threshold:e}"));
    }
    println!("{:>15} {gamma0:e}", "gamma0");
    if !(gamma0 > 0.0) {
        failures.push(format!("gamma0 = {gamma0:e} is not positive"));
    }
    println!("{:>15} {:e}\n{:>15} {:e}\n{:>15} {:?}", "alpha", sosc.alpha, "rho", sosc.rho, "verdict", sosc.verdict);
    if sosc.verdict == Verdict::Fails {
        failures.push(format!("coercivity fails: alpha = {:e}", sosc.alpha));
    }
    let report = VerifyReport {
        threshold,
        residuals,
        min_e,
        gamma0,
        alpha: sosc.alpha,
        rho: sosc.rho,
        verdict: sosc.verdict,
        failures: failures.clone(),
    };
    write_json(&s.out("verify.json"), &s.provenance("verify"), &report)?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verification(failures.join("; ")))
    }
}

#[derive(Debug, Serialize)]
struct GradcheckReport {
    tol: f64,
    step: f64,
    check: paracon::oracle::GradientCheck,
}

/// Adjoint gradient against central differences at the configured control.
pub fn cmd_gradcheck(config: RunConfig) -> CliResult<()> {
    let s = Session::open(config)?;
    let g = &s.config.gradcheck;
    let u = s.config.gradcheck_control(s.dp.mesh())?;
    let check = fd_gradient_check(&s.dp, &u, &s.w, g.directions, g.step, s.config.seed)?;
    println!("max relative error {:e} over {} directions", check.max_rel_error, check.pairs.len());
    let failed = !(check.max_rel_error <= g.tol);
    let report = GradcheckReport {
        tol: g.tol,
        step: g.step,
        check,
    };
    write_json(&s.out("gradcheck.json"), &s.provenance("gradcheck"), &report)?;
    if failed {
        return Err(CliError::Verification(format!(
            "gradient relative error {:e} > {:e}",
            report.check.max_rel_error, g.tol
        )));
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct MmsReport {
    recipe: Recipe,
    exact_residuals: KktResiduals,
    solved: SolveSummary<'static>,
    /// `L²(Q_h)` distance of the solved fields to the exact ones.
    errors: [(&'static str, f64); 4],
    active_points: usize,
    active_set_matches: bool,
}

/// Exports a manufactured case, solves it and compares with the exact fields.
pub fn cmd_mms(config: RunConfig, recipe: Recipe) -> CliResult<()> {
    config.validate(false)?;
    config.prepare_out()?;
    let mesh = MeshQ::new(paracon::model::SpatialDomain::unit_interval(), 1.0, config.mesh.nx, config.mesh.nt)?;
    let case = build_manufactured(recipe, &mesh)?;
    let out = &config.out;
    let problem = ProblemFile::from_spec(&case.spec, Some(Path::new("w.grid")))?;
    fs::write(out.join("problem.toml"), problem.to_toml()?)?;
    write_grid_field(&out.join("w.grid"), &case.w)?;
    let mut exact = case.exact.clone();
    exact.residuals = case.exact_residuals()?;
    exact.save(&out.join("exact"), None)?;

    let dp = case.discrete();
    let pt = solve_ocp(&dp, &case.w, None, &config.solver).map_err(CliError::Solver)?;
    pt.save(&out.join("solved"), Some(&config.solver))?;
    let active: Vec<bool> = pt.e.interior().iter().map(|v| *v > 0.0).collect();
    let dist = |a: &GridField, b: &GridField| a.sub(b).map(|d| d.l2q());
    let report = MmsReport {
        recipe,
        exact_residuals: exact.residuals,
        solved: summarize(&pt, "solved"),
        errors: [
            ("y", dist(&pt.y, &exact.y)?),
            ("u", dist(&pt.u, &exact.u)?),
            ("phi", dist(&pt.phi, &exact.phi)?),
            ("e", dist(&pt.e, &exact.e)?),
        ],
        active_points: case.active.iter().filter(|a| **a).count(),
        active_set_matches: active == case.active,
    };
    let prov = Provenance::new("mms", mesh, &config, Some(&problem));
    write_json(&out.join("mms.json"), &prov, &report)?;
    println!(
        "{recipe:?}: exact residual {:e}, solved residual {:e}, active set {}",
        report.exact_residuals.max(),
        pt.residuals.max(),
        if report.active_set_matches { "recovered" } else { "differs" }
    );
    if !report.active_set_matches {
        return Err(CliError::Verification("solved active set differs from the exact one".into()));
    }
    Ok(())
}
