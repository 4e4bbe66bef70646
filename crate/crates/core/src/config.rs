//! Problem files: TOML documents declaring a [`ProblemSpec`].
//!
//! ```toml
//! schema_version = 1
//!
//! [domain]
//! kind = "interval"
//! bounds = [[0.0, 1.0]]
//!
//! [time]
//! T = 1.0
//!
//! [coeffs]
//! a = "1"
//!
//! [functions]
//! L = "0.5*(y - sin(pi*x))^2 + 0.5*u^2"
//! f = "y^3"
//! g = "u - 1"
//!
//! [init]
//! y0 = "0"
//!
//! [parameter]
//! w = 0.0
//! ```
//!
//! `coeffs.a` is a scalar expression or a full table of expressions;
//! `parameter.w` is a number, an expression in `x, x2, t`, or `{ file = "w.grid" }`
//! resolved relative to the problem file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{ScalarFn2, VarSet};
use crate::model::{vars_parameter, EllipticCoefficients, ParameterSource, ProblemSpec, SpatialDomain};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub schema_version: u32,
    pub domain: DomainSection,
    pub time: TimeSection,
    #[serde(default)]
    pub coeffs: CoeffSection,
    pub functions: FunctionSection,
    pub init: InitSection,
    #[serde(default)]
    pub parameter: ParameterSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainKind {
    Interval,
    Rectangle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    pub kind: DomainKind,
    pub bounds: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    #[serde(rename = "T")]
    pub horizon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coefficient {
    Scalar(String),
    Table(Vec<Vec<String>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoeffSection {
    pub a: Coefficient,
}

impl Default for CoeffSection {
    fn default() -> Self {
        CoeffSection {
            a: Coefficient::Scalar("1".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionSection {
    #[serde(rename = "L")]
    pub integrand: String,
    pub f: String,
    pub g: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSection {
    pub y0: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridRef {
    pub file: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParameterValue {
    Constant(f64),
    Expression(String),
    File(GridRef),
}

impl ParameterValue {
    /// Expressions may reference `x, x2, t`; files are resolved against `base_dir`.
    pub fn to_source(&self, base_dir: &Path) -> Result<ParameterSource> {
        Ok(match self {
            ParameterValue::Constant(c) => ParameterSource::Constant(*c),
            ParameterValue::Expression(e) => ParameterSource::Expression(ScalarFn2::parse(e, vars_parameter())?),
            ParameterValue::File(r) => ParameterSource::GridFile(base_dir.join(&r.file)),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterSection {
    pub w: ParameterValue,
}

impl Default for ParameterSection {
    fn default() -> Self {
        ParameterSection {
            w: ParameterValue::Constant(0.0),
        }
    }
}

fn config_err(context: &str, e: impl std::fmt::Display) -> Error {
    Error::Config(format!("{context}: {e}"))
}

impl ProblemFile {
    pub fn parse(text: &str) -> Result<Self> {
        let file: ProblemFile = toml::from_str(text).map_err(|e| config_err("problem file", e))?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "problem file: schema_version {} is not supported (expected {SCHEMA_VERSION})",
                file.schema_version
            )));
        }
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| config_err(&path.display().to_string(), e))?;
        Self::parse(&text).map_err(|e| config_err(&path.display().to_string(), e))
    }

    /// Builds the problem; grid files are resolved against `base_dir`.
    pub fn to_spec(&self, base_dir: &Path) -> Result<ProblemSpec> {
        let axis = |k: usize| self.domain.bounds[k];
        let domain = match (self.domain.kind, self.domain.bounds.len()) {
            (DomainKind::Interval, 1) => SpatialDomain::interval(axis(0)[0], axis(0)[1])?,
            (DomainKind::Rectangle, 2) => SpatialDomain::rectangle(axis(0), axis(1))?,
            (kind, n) => {
                return Err(Error::Config(format!(
                    "domain: kind {kind:?} takes {} bound pairs, got {n}",
                    if kind == DomainKind::Interval { 1 } else { 2 }
                )))
            }
        };
        let coeffs = match &self.coeffs.a {
            Coefficient::Scalar(a) => EllipticCoefficients::isotropic(ScalarFn2::parse(a, VarSet::space())?, domain.dim()),
            Coefficient::Table(rows) => EllipticCoefficients::from_table(
                rows.iter()
                    .map(|r| r.iter().map(|a| ScalarFn2::parse(a, VarSet::space())).collect())
                    .collect::<Result<Vec<Vec<_>>>>()?,
            )?,
        };
        let parameter = self.parameter.w.to_source(base_dir)?;
        let all = |s: &str| ScalarFn2::parse(s, VarSet::all());
        ProblemSpec::new(
            domain,
            self.time.horizon,
            coeffs,
            ScalarFn2::parse(&self.init.y0, VarSet::space())?,
            all(&self.functions.integrand)?,
            all(&self.functions.f)?,
            all(&self.functions.g)?,
            parameter,
        )
    }

    /// Describes `spec`; an in-memory grid parameter is referenced as `grid_file`.
    pub fn from_spec(spec: &ProblemSpec, grid_file: Option<&Path>) -> Result<Self> {
        let (kind, bounds) = match spec.domain {
            SpatialDomain::Interval { bounds } => (DomainKind::Interval, vec![bounds]),
            SpatialDomain::Rectangle { bounds } => (DomainKind::Rectangle, bounds.to_vec()),
        };
        let d = spec.dim();
        let table: Vec<Vec<String>> = (0..d)
            .map(|i| (0..d).map(|j| spec.coeffs.entry(i, j).to_string()).collect())
            .collect();
        let isotropic = (0..d).all(|i| (0..d).all(|j| table[i][j] == if i == j { &table[0][0] } else { "0" }));
        let a = if isotropic {
            Coefficient::Scalar(table[0][0].clone())
        } else {
            Coefficient::Table(table)
        };
        let w = match &spec.parameter {
            ParameterSource::Constant(c) => ParameterValue::Constant(*c),
            ParameterSource::Expression(e) => ParameterValue::Expression(e.to_string()),
            ParameterSource::GridFile(p) => ParameterValue::File(GridRef { file: p.clone() }),
            ParameterSource::Grid(_) => match grid_file {
                Some(p) => ParameterValue::File(GridRef { file: p.to_path_buf() }),
                None => return Err(Error::Config("a grid parameter needs a file name".into())),
            },
        };
        Ok(ProblemFile {
            schema_version: SCHEMA_VERSION,
            domain: DomainSection { kind, bounds },
            time: TimeSection { horizon: spec.horizon },
            coeffs: CoeffSection { a },
            functions: FunctionSection {
                integrand: spec.integrand.to_string(),
                f: spec.nonlinearity.to_string(),
                g: spec.constraint.to_string(),
            },
            init: InitSection {
                y0: spec.y0.to_string(),
            },
            parameter: ParameterSection { w },
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| config_err("problem file", e))
    }
}

/// Reads and builds the problem declared at `path`.
pub fn load_problem(path: &Path) -> Result<ProblemSpec> {
    let base = path.parent().unwrap_or(Path::new("."));
    ProblemFile::load(path)?.to_spec(base)
}
