use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use paracon::grid::{read_grid_field, write_grid_field, MeshQ};
use paracon::model::SpatialDomain;
use serde_json::Value;
use tempfile::TempDir;

const SEMILINEAR: &str = r#"
schema_version = 1
[domain]
kind = "interval"
bounds = [[0.0, 1.0]]
[time]
T = 1.0
[functions]
L = "0.5*(y - 50*sin(2*pi*x))^2 + 0.5*u^2"
f = "y*(w^2 + t^4 + x^2)"
g = "u + w"
[init]
y0 = "sin(pi*x)"
[parameter]
w = 0.5
"#;

fn lq(psi: &str, sign: &str) -> String {
    format!(
        r#"
schema_version = 1
[domain]
kind = "interval"
bounds = [[0.0, 1.0]]
[time]
T = 1.0
[functions]
L = "0.5*(y - 10*sin(pi*x)*t)^2 {sign} 0.5*u^2"
f = "0"
g = "u - {psi}"
[init]
y0 = "0"
"#
    )
}

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        Workspace {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn write(&self, name: &str, text: &str) -> PathBuf {
        let p = self.path(name);
        fs::write(&p, text).unwrap();
        p
    }

    /// A run config for `problem` with extra TOML appended.
    fn config(&self, problem: &str, extra: &str) -> PathBuf {
        self.write(
            "run.toml",
            &format!("schema_version = 1\nproblem = \"{problem}\"\n[mesh]\nnx = 8\nnt = 8\n{extra}"),
        )
    }
}

fn paracon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_paracon")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn zero_problem_solves_to_zero_objective() {
    let ws = Workspace::new();
    ws.write("zero.toml", &lq("1", "+").replace("10*sin(pi*x)*t", "0"));
    let cfg = ws.config("zero.toml", "");
    let out = ws.path("out");
    let o = paracon(&["solve", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let doc = json(&out.join("solve.json"));
    assert_eq!(doc["result"]["objective"], 0.0);
    assert_eq!(doc["provenance"]["seed"], 0);
    for f in ["y", "u", "phi", "e"] {
        assert!(out.join(format!("{f}.grid")).is_file());
    }
}

#[test]
fn lq_solve_reports_small_residuals() {
    let ws = Workspace::new();
    ws.write("lq.toml", &lq("0.4", "+"));
    let cfg = ws.config("lq.toml", "[solver]\nkkt_tol = 1e-10\n");
    let out = ws.path("out");
    assert_eq!(code(&paracon(&["solve", "--config", s(&cfg), "--out", s(&out)])), 0);
    let r = &json(&out.join("solve.json"))["result"]["residuals"];
    for k in ["state", "adjoint", "stationarity", "complementarity"] {
        assert!(r[k].as_f64().unwrap() <= 1e-10, "{k}: {}", r[k]);
    }
}

#[test]
fn config_errors_exit_with_1() {
    let ws = Workspace::new();
    let cfg = ws.config("missing.toml", "");
    let o = paracon(&["solve", "--config", s(&cfg)]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.toml"));

    ws.write("lq.toml", &lq("0.4", "+"));
    let cfg = ws.config("lq.toml", "[solver]\nkkt_tolerance = 1e-9\n");
    assert_eq!(code(&paracon(&["solve", "--config", s(&cfg)])), 1);

    assert_eq!(code(&paracon(&["solve", "--mesh", "8"])), 1);
    assert_eq!(code(&paracon(&["--help"])), 0);
}

#[test]
fn sweep_rows_and_reproducibility() {
    let ws = Workspace::new();
    ws.write("semi.toml", SEMILINEAR);
    let cfg = ws.config(
        "semi.toml",
        "[sweep]\nradii = [0.04, 0.02, 0.01]\ndirections = [\"sine\", \"random\"]\n",
    );
    let (a, b) = (ws.path("a"), ws.path("b"));
    for out in [&a, &b] {
        let o = paracon(&["sweep", "--config", s(&cfg), "--seed", "5", "--out", s(out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let csv = fs::read_to_string(a.join("sweep.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 7);
    assert!(csv.contains("# seed = 5"));
    for f in ["sweep.csv", "sweep.json", "sweep_plot.dat"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let doc = json(&a.join("sweep.json"));
    assert_eq!(doc["result"]["report"]["sosc_verdict"], "holds");
    assert_eq!(doc["result"]["flags"].as_array().unwrap().len(), 0);
}

#[test]
fn lq_sweep_ratio_is_constant() {
    let ws = Workspace::new();
    ws.write("lq.toml", &lq("1000000", "+"));
    let cfg = ws.config("lq.toml", "");
    let out = ws.path("out");
    assert_eq!(code(&paracon(&["sweep", "--config", s(&cfg), "--out", s(&out)])), 0);
    let doc = json(&out.join("sweep.json"));
    let records = doc["result"]["records"].as_array().unwrap();
    for dir in ["constant", "sine", "random"] {
        let ratios: Vec<f64> = records
            .iter()
            .filter(|r| r["direction"] == dir)
            .map(|r| r["ratio_u"].as_f64().unwrap())
            .collect();
        assert_eq!(ratios.len(), 5);
        for r in &ratios {
            assert!((r - ratios[0]).abs() <= 1e-6 * ratios[0], "{dir}: {ratios:?}");
        }
    }
}

#[test]
fn concave_fixture_is_flagged() {
    let ws = Workspace::new();
    ws.write("concave.toml", &lq("1000000", "-"));
    let cfg = ws.config("concave.toml", "");
    let out = ws.path("out");
    let o = paracon(&["sweep", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let doc = json(&out.join("sweep.json"));
    assert_eq!(doc["result"]["flags"][0], "hypotheses unmet");
    assert_eq!(doc["result"]["report"]["hypotheses_met"], false);
    assert_eq!(code(&paracon(&["sosc", "--config", s(&cfg), "--out", s(&out)])), 4);
}

#[test]
fn failed_records_exit_with_3() {
    let ws = Workspace::new();
    ws.write("semi.toml", SEMILINEAR);
    let base = ws.path("base");
    let cfg = ws.config("semi.toml", "");
    assert_eq!(code(&paracon(&["solve", "--config", s(&cfg), "--out", s(&base)])), 0);
    let cfg = ws.config(
        "semi.toml",
        "[solver]\nmax_outer_iters = 1\n[sweep]\nradii = [0.1, 0.05, 0.025]\nwarm_start = false\n",
    );
    let o = paracon(&["sweep", "--config", s(&cfg), "--warm", s(&base), "--out", s(&ws.path("out"))]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("valid records"));
    assert!(fs::read_to_string(ws.path("out/sweep.csv")).unwrap().contains(",failed"));
}

#[test]
fn solver_failure_exits_with_2() {
    let ws = Workspace::new();
    ws.write("semi.toml", SEMILINEAR);
    let cfg = ws.config("semi.toml", "[solver]\nmax_outer_iters = 1\n");
    assert_eq!(code(&paracon(&["solve", "--config", s(&cfg), "--out", s(&ws.path("o"))])), 2);
}

#[test]
fn verify_manufactured_point_and_injected_fault() {
    let ws = Workspace::new();
    let case = ws.path("case");
    let o = paracon(&["mms", "--recipe", "lq-active-band", "--mesh", "16,16", "--out", s(&case)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(json(&case.join("mms.json"))["result"]["active_set_matches"].as_bool().unwrap());

    let cfg = ws.write(
        "verify.toml",
        "schema_version = 1\nproblem = \"case/problem.toml\"\n[mesh]\nnx = 16\nnt = 16\n[verify]\nmesh_scale = 2.0\n",
    );
    let out = ws.path("verify");
    let o = paracon(&["verify", s(&case.join("exact")), "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let report = json(&out.join("verify.json"));
    assert!(report["result"]["threshold"].as_f64().unwrap() > 0.0);

    // one sign flip in the multiplier
    let mesh = MeshQ::new(SpatialDomain::unit_interval(), 1.0, 16, 16).unwrap();
    let bad = ws.path("bad");
    fs::create_dir(&bad).unwrap();
    for f in ["y", "u", "phi"] {
        fs::copy(case.join(format!("exact/{f}.grid")), bad.join(format!("{f}.grid"))).unwrap();
    }
    let mut e = read_grid_field(&case.join("exact/e.grid"), &mesh).unwrap();
    let k = (0..e.values().len()).max_by(|a, b| e.values()[*a].total_cmp(&e.values()[*b])).unwrap();
    e.values_mut()[k] *= -1.0;
    write_grid_field(&bad.join("e.grid"), &e).unwrap();
    let o = paracon(&["verify", s(&bad), "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("complementarity"));

    fs::write(bad.join("e.grid"), "16 16 0.1 0.1\n1 2 x\n").unwrap();
    assert_eq!(code(&paracon(&["verify", s(&bad), "--config", s(&cfg), "--out", s(&out)])), 1);
}

#[test]
fn gradcheck_passes_on_semilinear_fixture() {
    let ws = Workspace::new();
    ws.write("semi.toml", SEMILINEAR);
    let cfg = ws.config("semi.toml", "[gradcheck]\ncontrol = -1.0\n");
    let out = ws.path("out");
    let o = paracon(&["gradcheck", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(json(&out.join("gradcheck.json"))["result"]["check"]["max_rel_error"].as_f64().unwrap() <= 1e-5);

    let cfg = ws.config("semi.toml", "[gradcheck]\ncontrol = 0.0\n");
    assert_eq!(code(&paracon(&["gradcheck", "--config", s(&cfg), "--out", s(&out)])), 1);
}

#[test]
fn exported_case_reloads_as_ordinary_problem() {
    let ws = Workspace::new();
    let case = ws.path("case");
    assert_eq!(code(&paracon(&["mms", "--recipe", "semilinear-band", "--mesh", "8,8", "--out", s(&case)])), 0);
    let spec = paracon::config::load_problem(&case.join("problem.toml")).unwrap();
    let mesh = MeshQ::new(SpatialDomain::unit_interval(), 1.0, 8, 8).unwrap();
    assert_eq!(spec.nominal_parameter(&mesh).unwrap(), read_grid_field(&case.join("w.grid"), &mesh).unwrap());
}
