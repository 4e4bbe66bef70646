//! Deterministic JSON, CSV and plot-data writers. Every file carries the tool
//! version, command, seed, mesh and an echo of the run and problem configs.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use paracon::config::ProblemFile;
use paracon::grid::MeshQ;
use paracon::stability::SweepRecord;
use serde::Serialize;

use crate::error::CliResult;
use crate::run_config::RunConfig;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const CSV_HEADER: &str =
    "direction,radius,du_l2,dy_w112,dphi_l2,de_l2,ratio_u,ratio_y,ratio_phi,ratio_e,iters,status";

#[derive(Debug, Clone, Serialize)]
pub struct Provenance<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub seed: u64,
    pub mesh: MeshQ,
    pub config: &'a RunConfig,
    pub problem: Option<&'a ProblemFile>,
}

impl<'a> Provenance<'a> {
    pub fn new(command: &'a str, mesh: MeshQ, config: &'a RunConfig, problem: Option<&'a ProblemFile>) -> Self {
        Provenance {
            tool: "paracon",
            version: VERSION,
            command,
            seed: config.seed,
            mesh,
            config,
            problem,
        }
    }

    /// `#`-prefixed lines for text outputs.
    pub fn comment_lines(&self) -> CliResult<String> {
        let mut out = String::new();
        writeln!(out, "# {} {} {}", self.tool, self.version, self.command).unwrap();
        writeln!(out, "# seed = {}", self.seed).unwrap();
        writeln!(
            out,
            "# mesh = {{ nx = {}, nt = {}, horizon = {:?} }}",
            self.mesh.nx, self.mesh.nt, self.mesh.horizon
        )
        .unwrap();
        writeln!(out, "# config = {}", serde_json::to_string(self.config).map_err(paracon::Error::from)?).unwrap();
        if let Some(p) = self.problem {
            writeln!(out, "# problem = {}", serde_json::to_string(p).map_err(paracon::Error::from)?).unwrap();
        }
        Ok(out)
    }
}

#[derive(Serialize)]
struct Document<'a, T: Serialize> {
    provenance: &'a Provenance<'a>,
    result: &'a T,
}

pub fn write_json<T: Serialize>(path: &Path, provenance: &Provenance, result: &T) -> CliResult<()> {
    let doc = Document { provenance, result };
    let text = serde_json::to_string_pretty(&doc).map_err(paracon::Error::from)?;
    fs::write(path, text + "\n")?;
    Ok(())
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

pub fn sweep_csv(provenance: &Provenance, records: &[SweepRecord]) -> CliResult<String> {
    let mut out = provenance.comment_lines()?;
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        let cells = [
            r.direction.clone(),
            num(r.radius),
            num(r.du_l2),
            num(r.dy_w112),
            num(r.dphi_l2),
            num(r.de_l2),
            num(r.ratio_u),
            num(r.ratio_y),
            num(r.ratio_phi),
            num(r.ratio_e),
            r.iters.to_string(),
            r.status().to_string(),
        ];
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    Ok(out)
}
