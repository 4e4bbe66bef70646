//! Run configuration: which problem to load, the mesh, solver settings,
//! sweep plan, seed and output directory.

use std::fs;
use std::path::{Path, PathBuf};

use paracon::config::ParameterValue;
use paracon::grid::{GridField, MeshQ};
use paracon::kkt::NcpConfig;
use paracon::stability::{default_directions, default_radii, Direction, SweepPlan};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSection {
    pub nx: usize,
    pub nt: usize,
}

impl Default for MeshSection {
    fn default() -> Self {
        MeshSection { nx: 16, nt: 16 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DirectionSpec {
    /// `constant`, `sine` or `random`.
    Builtin(String),
    /// Rescaled to unit sup norm on `Q_h`.
    Expression { name: String, expr: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub radii: Vec<f64>,
    pub directions: Vec<DirectionSpec>,
    pub warm_start: bool,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            radii: default_radii(5),
            directions: ["constant", "sine", "random"]
                .iter()
                .map(|s| DirectionSpec::Builtin(s.to_string()))
                .collect(),
            warm_start: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    pub tol: f64,
    /// When set, the residual threshold is `mesh_scale * (tau + h^2)`.
    pub mesh_scale: Option<f64>,
}

impl Default for VerifySection {
    fn default() -> Self {
        VerifySection {
            tol: 1e-8,
            mesh_scale: None,
        }
    }
}

impl VerifySection {
    pub fn threshold(&self, mesh: &MeshQ) -> f64 {
        match self.mesh_scale {
            Some(c) => c * (mesh.tau() + mesh.h()[0].powi(2)),
            None => self.tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradcheckSection {
    pub control: ParameterValue,
    pub directions: usize,
    pub step: f64,
    pub tol: f64,
}

impl Default for GradcheckSection {
    fn default() -> Self {
        GradcheckSection {
            control: ParameterValue::Constant(0.0),
            directions: 10,
            step: 1e-5,
            tol: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub problem: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    /// Not echoed into outputs so that runs differing only in destination
    /// produce identical files.
    #[serde(default = "default_out", skip_serializing)]
    pub out: PathBuf,
    #[serde(default)]
    pub mesh: MeshSection,
    #[serde(default)]
    pub solver: NcpConfig,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub verify: VerifySection,
    #[serde(default)]
    pub gradcheck: GradcheckSection,
    /// Directory relative paths in the file are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_out() -> PathBuf {
    PathBuf::from("paracon-out")
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            problem: None,
            seed: 0,
            out: default_out(),
            mesh: MeshSection::default(),
            solver: NcpConfig::default(),
            sweep: SweepSection::default(),
            verify: VerifySection::default(),
            gradcheck: GradcheckSection::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub mesh: Option<(usize, usize)>,
}

impl RunConfig {
    pub fn parse(text: &str, base_dir: &Path) -> CliResult<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        cfg.base_dir = base_dir.to_path_buf();
        cfg.out = base_dir.join(&cfg.out);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some((nx, nt)) = o.mesh {
            self.mesh = MeshSection { nx, nt };
        }
    }

    /// Checks settings and that the problem file exists.
    pub fn validate(&self, needs_problem: bool) -> CliResult<()> {
        self.solver.validate()?;
        if self.mesh.nx == 0 || self.mesh.nt == 0 {
            return Err(CliError::Config(format!("mesh {}x{} must be positive", self.mesh.nx, self.mesh.nt)));
        }
        if needs_problem {
            let path = self
                .problem_path()
                .ok_or_else(|| CliError::Config("no problem file configured".into()))?;
            if !path.is_file() {
                return Err(CliError::Config(format!("problem file {} not found", path.display())));
            }
        }
        Ok(())
    }

    pub fn problem_path(&self) -> Option<PathBuf> {
        self.problem.as_ref().map(|p| self.base_dir.join(p))
    }

    /// Creates the output directory and checks it accepts files.
    pub fn prepare_out(&self) -> CliResult<&Path> {
        let fail = |e: std::io::Error| CliError::Config(format!("output directory {}: {e}", self.out.display()));
        fs::create_dir_all(&self.out).map_err(fail)?;
        let probe = self.out.join(".paracon-write-test");
        fs::write(&probe, b"").map_err(fail)?;
        fs::remove_file(&probe).map_err(fail)?;
        Ok(&self.out)
    }

    pub fn sweep_plan(&self, mesh: &MeshQ) -> CliResult<SweepPlan> {
        let builtin = default_directions(mesh, self.seed);
        let mut directions = Vec::with_capacity(self.sweep.directions.len());
        for d in &self.sweep.directions {
            directions.push(match d {
                DirectionSpec::Builtin(name) => builtin
                    .iter()
                    .find(|b| &b.name == name)
                    .cloned()
                    .ok_or_else(|| CliError::Config(format!("unknown sweep direction `{name}`")))?,
                DirectionSpec::Expression { name, expr } => {
                    let mut field = ParameterValue::Expression(expr.clone())
                        .to_source(&self.base_dir)?
                        .sample(mesh)?;
                    field.level_mut(0).iter_mut().for_each(|v| *v = 0.0);
                    let peak = field.linf();
                    if !(peak > 0.0 && peak.is_finite()) {
                        return Err(CliError::Config(format!("sweep direction `{name}` vanishes on the mesh")));
                    }
                    Direction {
                        name: name.clone(),
                        field: field.scale(1.0 / peak),
                    }
                }
            });
        }
        let plan = SweepPlan {
            directions,
            radii: self.sweep.radii.clone(),
            warm_start: self.sweep.warm_start,
        };
        plan.validate(mesh)?;
        Ok(plan)
    }

    pub fn gradcheck_control(&self, mesh: &MeshQ) -> CliResult<GridField> {
        Ok(self.gradcheck.control.to_source(&self.base_dir)?.sample(mesh)?)
    }
}
