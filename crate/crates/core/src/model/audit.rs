//! Sampling-based audits of the standing hypotheses.
//!
//! The constants in the hypotheses are existential; these audits report
//! sampled lower and upper bounds at a fixed seed and probe count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EllipticCoefficients, ProblemSpec, SpatialDomain};
use crate::error::{Error, Result};
use crate::expr::{Derivs, Point, ScalarFn2};
use crate::grid::GridField;

/// Minimum over probe points of the smallest eigenvalue of `(a_ij(x))`.
///
/// Probes are the domain corners (endpoints in 1D) plus `probes` uniform
/// random points drawn from `seed`.
pub fn audit_h1(
    coeffs: &EllipticCoefficients,
    domain: &SpatialDomain,
    probes: usize,
    seed: u64,
) -> Result<f64> {
    if probes == 0 {
        return Err(Error::InvalidProblem("audit_h1 needs at least one probe".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts: Vec<[f64; 2]> = match domain.dim() {
        1 => vec![domain.from_unit([0.0, 0.0]), domain.from_unit([1.0, 0.0])],
        _ => [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]
            .iter()
            .map(|s| domain.from_unit(*s))
            .collect(),
    };
    for _ in 0..probes {
        pts.push(domain.from_unit([rng.gen(), rng.gen()]));
    }
    let mut alpha = f64::INFINITY;
    for x in pts {
        let p = Point::space(x);
        let lam = if coeffs.dim() == 1 {
            coeffs.entry(0, 0).eval(&p)
        } else {
            let a11 = coeffs.entry(0, 0).eval(&p);
            let a22 = coeffs.entry(1, 1).eval(&p);
            let a12 = coeffs.entry(0, 1).eval(&p);
            let a21 = coeffs.entry(1, 0).eval(&p);
            if (a12 - a21).abs() > 1e-12 * (1.0 + a12.abs().max(a21.abs())) {
                return Err(Error::NonSymmetric { i: 0, j: 1, at: x });
            }
            let mean = 0.5 * (a11 + a22);
            let dev = (0.25 * (a11 - a22).powi(2) + a12 * a12).sqrt();
            mean - dev
        };
        alpha = alpha.min(lam);
    }
    Ok(alpha)
}

/// Sampled constants for the growth/Lipschitz hypotheses on `f`, `L` and `g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzSamples {
    /// `(name, sampled value)` pairs in a fixed order.
    pub entries: Vec<(String, f64)>,
    /// Names of quotients that kept growing under probe refinement.
    pub diverging: Vec<String>,
}

impl LipschitzSamples {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub seed: u64,
    pub probes: usize,
    pub bound_m: f64,
    pub h1_alpha: f64,
    pub h2_cf: f64,
    pub f_vanishes_at_zero: bool,
    pub lipschitz_samples: LipschitzSamples,
    pub h4_gamma0: f64,
    pub pass_h1: bool,
    pub pass_h2: bool,
    pub pass_h3: bool,
    pub pass_h4: bool,
}

impl AuditReport {
    /// Runs every audit; `h4_gamma0` is measured along `(y, u, w)`.
    pub fn run(
        spec: &ProblemSpec,
        y: &GridField,
        u: &GridField,
        w: &GridField,
        bound_m: f64,
        probes: usize,
        seed: u64,
    ) -> Result<Self> {
        let h1_alpha = audit_h1(&spec.coeffs, &spec.domain, probes, seed)?;
        let samples = audit_h2_h3(spec, bound_m, probes, seed)?;
        let h2_cf = samples.get("C_f").unwrap_or(f64::NAN);
        let f_vanishes_at_zero = samples.get("max|f(x,t,0,w)|").unwrap_or(0.0) <= 1e-12;
        let h4_gamma0 = audit_h4(spec, y, u, w)?;
        let f_div = samples.diverging.iter().any(|n| n.starts_with("k_f"));
        let lg_div = samples
            .diverging
            .iter()
            .any(|n| n.starts_with("k_L") || n.starts_with("k_g"));
        Ok(AuditReport {
            seed,
            probes,
            bound_m,
            h1_alpha,
            h2_cf,
            f_vanishes_at_zero,
            pass_h1: h1_alpha > 0.0,
            pass_h2: f_vanishes_at_zero && !f_div && h2_cf.is_finite(),
            pass_h3: !lg_div,
            pass_h4: h4_gamma0 > 1e-12,
            lipschitz_samples: samples,
            h4_gamma0,
        })
    }
}

/// Which arguments a function is sampled over.
#[derive(Clone, Copy)]
enum Args {
    /// `(y, w)` for the state nonlinearity.
    StateParam,
    /// `(y, u, w)` for integrand and constraint.
    Full,
}

struct Sampler<'a> {
    spec: &'a ProblemSpec,
    m: f64,
    rng: ChaCha8Rng,
}

impl Sampler<'_> {
    fn point(&mut self, args: Args) -> Point {
        let s = [self.rng.gen(), self.rng.gen()];
        let x = self.spec.domain.from_unit(s);
        let t = self.rng.gen::<f64>() * self.spec.horizon;
        let m = self.m;
        let y = self.rng.gen_range(-m..=m);
        let u = match args {
            Args::Full => self.rng.gen_range(-m..=m),
            Args::StateParam => 0.0,
        };
        let w = self.rng.gen_range(-m..=m);
        Point::new(x, t, y, u, w)
    }

    /// A second point at the same `(x, t)`, within `sep` of `p` in each active argument
    /// and inside the box.
    fn neighbour(&mut self, p: &Point, args: Args, sep: f64) -> Point {
        let m = self.m;
        let mut jitter = |v: f64| (v + self.rng.gen_range(-sep..=sep)).clamp(-m, m);
        let mut q = *p;
        q.y = jitter(p.y);
        if let Args::Full = args {
            q.u = jitter(p.u);
        }
        q.w = jitter(p.w);
        q
    }
}

fn distance(p: &Point, q: &Point) -> f64 {
    (p.y - q.y).abs() + (p.u - q.u).abs() + (p.w - q.w).abs()
}

fn deriv_gap(a: &Derivs, b: &Derivs, args: Args) -> f64 {
    let mut s = (a.y - b.y).abs()
        + (a.w - b.w).abs()
        + (a.yy - b.yy).abs()
        + (a.yw - b.yw).abs()
        + (a.ww - b.ww).abs();
    if let Args::Full = args {
        s += (a.u - b.u).abs() + (a.yu - b.yu).abs() + (a.uu - b.uu).abs() + (a.uw - b.uw).abs();
    }
    s
}

/// Max difference quotients of value and of derivatives over `pairs` pairs with
/// separation at most `sep` (`None`: independent points of the whole box).
fn quotients(
    s: &mut Sampler<'_>,
    f: &ScalarFn2,
    args: Args,
    pairs: usize,
    sep: Option<f64>,
) -> (f64, f64) {
    let mut kv = 0.0f64;
    let mut kd = 0.0f64;
    for _ in 0..pairs {
        let p = s.point(args);
        let q = match sep {
            Some(r) => s.neighbour(&p, args, r),
            None => {
                let mut q = s.point(args);
                q.x = p.x;
                q.t = p.t;
                q
            }
        };
        let d = distance(&p, &q);
        if d <= 0.0 {
            continue;
        }
        let (dp, dq) = (f.derivs(&p), f.derivs(&q));
        kv = kv.max((dp.v - dq.v).abs() / d);
        kd = kd.max(deriv_gap(&dp, &dq, args) / d);
    }
    (kv, kd)
}

fn sample_function(
    s: &mut Sampler<'_>,
    name: &str,
    f: &ScalarFn2,
    args: Args,
    probes: usize,
    out: &mut LipschitzSamples,
) {
    let (kv0, kd0) = quotients(s, f, args, probes, None);
    // refinement: shrinking separations around random centres
    let (kv1, kd1) = quotients(s, f, args, 4 * probes, Some(s.m / 16.0));
    let (kv2, kd2) = quotients(s, f, args, 16 * probes, Some(s.m / 256.0));
    let mut bound = 0.0f64;
    for _ in 0..probes {
        let p = s.point(args);
        let d = f.derivs(&p);
        let b = match args {
            Args::StateParam => d.v.abs() + d.y.abs() + d.yy.abs(),
            Args::Full => d.y.abs() + d.u.abs() + d.yy.abs() + d.yu.abs() + d.uu.abs(),
        };
        bound = bound.max(b);
    }
    let kv = kv0.max(kv1).max(kv2);
    let kd = kd0.max(kd1).max(kd2);
    out.entries.push((format!("k_{name}M"), kv));
    out.entries.push((format!("k_{name}M_derivs"), kd));
    out.entries.push((format!("k_{name}M_bound"), bound));
    let diverges = |a: f64, b: f64| b > 4.0 * a.max(1e-300) && b > 1e-12;
    if diverges(kv1, kv2) {
        out.diverging.push(format!("k_{name}M"));
    }
    if diverges(kd1, kd2) {
        out.diverging.push(format!("k_{name}M_derivs"));
    }
}

/// Samples `C_f = min f_y`, `|f(·,·,0,·)|`, and the Lipschitz/boundedness
/// constants of `f`, `L`, `g` over `|y|, |u|, |w| <= m`.
///
/// `k_fM` is the largest value difference quotient of `f`; `k_fM_derivs` the
/// largest quotient of the summed derivative differences; `k_fM_bound` the
/// largest `|f| + |f_y| + |f_yy|`. Integrand and constraint report the same
/// triple under `k_LM*` and `k_gM*`.
pub fn audit_h2_h3(spec: &ProblemSpec, m: f64, probes: usize, seed: u64) -> Result<LipschitzSamples> {
    if !(m > 0.0) {
        return Err(Error::InvalidProblem(format!("bound M = {m} must be > 0")));
    }
    let probes = probes.max(1);
    let mut s = Sampler {
        spec,
        m,
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    let mut out = LipschitzSamples {
        entries: Vec::new(),
        diverging: Vec::new(),
    };
    let mut cf = f64::INFINITY;
    let mut f_at_zero = 0.0f64;
    for _ in 0..probes {
        let mut p = s.point(Args::StateParam);
        cf = cf.min(spec.nonlinearity.derivs(&p).y);
        p.y = 0.0;
        f_at_zero = f_at_zero.max(spec.nonlinearity.eval(&p).abs());
    }
    out.entries.push(("C_f".into(), cf));
    out.entries.push(("max|f(x,t,0,w)|".into(), f_at_zero));
    sample_function(&mut s, "f", &spec.nonlinearity, Args::StateParam, probes, &mut out);
    sample_function(&mut s, "L", &spec.integrand, Args::Full, probes, &mut out);
    sample_function(&mut s, "g", &spec.constraint, Args::Full, probes, &mut out);
    Ok(out)
}

/// `min |g_u(x, t, y, u, w)|` over the lattice points of `Q_h`.
pub fn audit_h4(spec: &ProblemSpec, y: &GridField, u: &GridField, w: &GridField) -> Result<f64> {
    y.check_mesh(u)?;
    y.check_mesh(w)?;
    let mesh = y.mesh();
    let coords = mesh.coords();
    let mut gamma = f64::INFINITY;
    for n in 1..mesh.levels() {
        let t = mesh.time(n);
        for (i, x) in coords.iter().enumerate() {
            let p = Point::new(*x, t, y.at(i, n), u.at(i, n), w.at(i, n));
            gamma = gamma.min(spec.constraint.derivs(&p).u.abs());
        }
    }
    Ok(gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::VarSet;
    use crate::grid::MeshQ;
    use crate::model::ParameterSource;

    fn e(s: &str) -> ScalarFn2 {
        ScalarFn2::parse(s, VarSet::all()).unwrap()
    }

    fn spec_with(f: &str, g: &str, horizon: f64) -> ProblemSpec {
        ProblemSpec::new(
            SpatialDomain::unit_interval(),
            horizon,
            EllipticCoefficients::identity(1),
            e("0"),
            e("0.5*y^2 + 0.5*u^2"),
            e(f),
            e(g),
            ParameterSource::Constant(0.0),
        )
        .unwrap()
    }

    #[test]
    fn ellipticity_constants() {
        let d = SpatialDomain::unit_interval();
        let one = EllipticCoefficients::identity(1);
        assert_eq!(audit_h1(&one, &d, 10, 1).unwrap(), 1.0);
        let sinus = EllipticCoefficients::isotropic(e("2 + sin(x)"), 1);
        let a = audit_h1(&sinus, &d, 50, 1).unwrap();
        assert!((a - 2.0).abs() < 1e-12, "{a}");
        let degenerate = EllipticCoefficients::isotropic(e("x"), 1);
        let a = audit_h1(&degenerate, &d, 50, 1).unwrap();
        assert!(a.abs() < 1e-12 && !(a > 0.0));
    }

    #[test]
    fn nonsymmetric_table_is_an_error() {
        let d = SpatialDomain::rectangle([0.0, 1.0], [0.0, 1.0]).unwrap();
        let c = EllipticCoefficients::from_table(vec![
            vec![e("1"), e("0.1")],
            vec![e("0.2"), e("1")],
        ])
        .unwrap();
        assert!(matches!(audit_h1(&c, &d, 5, 0), Err(Error::NonSymmetric { .. })));
        let ok = EllipticCoefficients::from_table(vec![
            vec![e("2"), e("1")],
            vec![e("1"), e("2")],
        ])
        .unwrap();
        assert!((audit_h1(&ok, &d, 5, 0).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn example_nonlinearity_constants() {
        let spec = spec_with("y*(w^2 + t^4 + x^2)", "u + w", 7.0);
        let s = audit_h2_h3(&spec, 1.0, 2000, 7).unwrap();
        let kf = s.get("k_fM").unwrap();
        // max{7^4 + 1 + M^2, 2 M^2} with M = 1
        assert!(kf <= 2403.0 && kf > 100.0, "k_fM = {kf}");
        assert!(s.get("C_f").unwrap() >= 0.0);
        assert_eq!(s.get("max|f(x,t,0,w)|").unwrap(), 0.0);
        assert!(s.diverging.is_empty(), "{:?}", s.diverging);
    }

    #[test]
    fn zero_nonlinearity_constants() {
        let spec = spec_with("0", "u", 1.0);
        let s = audit_h2_h3(&spec, 1.0, 100, 7).unwrap();
        assert_eq!(s.get("C_f").unwrap(), 0.0);
        assert_eq!(s.get("k_fM").unwrap(), 0.0);
    }

    #[test]
    fn singular_quotient_is_flagged() {
        let spec = spec_with("y", "u", 1.0);
        let mut s = spec.clone();
        s.integrand = e("1/(y^2 + 1e-12)");
        let out = audit_h2_h3(&s, 1.0, 400, 3).unwrap();
        assert!(out.diverging.iter().any(|n| n.starts_with("k_L")), "{out:?}");
    }

    #[test]
    fn h4_constants() {
        let mesh = MeshQ::new(SpatialDomain::unit_interval(), 1.0, 5, 4).unwrap();
        let y = GridField::from_fn(&mesh, |x, t| x[0] * t);
        let u = GridField::from_fn(&mesh, |x, t| x[0] - t);
        let w = GridField::constant(&mesh, 0.3);
        let linear = spec_with("0", "u + w", 1.0);
        assert_eq!(audit_h4(&linear, &y, &u, &w).unwrap(), 1.0);
        let cubic = spec_with("0", "sin(x)*t + w^4*u^3 + (y^2 + 1)*u", 1.0);
        assert!(audit_h4(&cubic, &y, &u, &w).unwrap() >= 1.0);
        let zero_y = GridField::zeros(&mesh);
        let bilinear = spec_with("0", "y*u", 1.0);
        assert_eq!(audit_h4(&bilinear, &zero_y, &u, &w).unwrap(), 0.0);
    }

    #[test]
    fn audit_report_is_deterministic() {
        let spec = spec_with("y*(w^2 + t^4 + x^2)", "u + w", 1.0);
        let mesh = MeshQ::new(SpatialDomain::unit_interval(), 1.0, 4, 4).unwrap();
        let z = GridField::zeros(&mesh);
        let a = AuditReport::run(&spec, &z, &z, &z, 1.0, 200, 42).unwrap();
        let b = AuditReport::run(&spec, &z, &z, &z, 1.0, 200, 42).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert!(a.pass_h1 && a.pass_h2 && a.pass_h3 && a.pass_h4);
    }
}
