//! Batch front end for `paracon`: reads run and problem configs, runs the
//! solve, sweep, sosc, verify, gradcheck and mms commands and writes
//! reproducible CSV, JSON and plot-data files.

pub mod commands;
pub mod error;
pub mod report;
pub mod run_config;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use paracon::oracle::Recipe;

pub use commands::{cmd_gradcheck, cmd_mms, cmd_solve, cmd_sosc, cmd_sweep, cmd_verify};
pub use error::{CliError, CliResult};
pub use run_config::{Overrides, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "paracon", version, about = "Parametric semilinear parabolic optimal control experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Run configuration (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,

    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,

    /// Interior nodes per axis and time steps.
    #[arg(long, global = true, value_name = "NX,NT", value_parser = parse_mesh)]
    pub mesh: Option<(usize, usize)>,

    /// Directory holding y/u/phi/e grid files to start from.
    #[arg(long, global = true, value_name = "PATH")]
    pub warm: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the optimality system.
    Solve,
    /// Perturb the parameter along the configured directions and radii.
    Sweep,
    /// Coercivity of the second-order form at the solution.
    Sosc,
    /// Check a stored point.
    Verify {
        /// Directory with y.grid, u.grid, phi.grid and e.grid.
        point: PathBuf,
    },
    /// Compare the adjoint gradient with finite differences.
    Gradcheck,
    /// Export and solve a manufactured case.
    Mms {
        #[arg(long, value_enum, default_value_t = RecipeArg::LqActiveBand)]
        recipe: RecipeArg,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RecipeArg {
    LqInactive,
    LqActiveBand,
    SemilinearBand,
}

impl From<RecipeArg> for Recipe {
    fn from(r: RecipeArg) -> Self {
        match r {
            RecipeArg::LqInactive => Recipe::LqInactive,
            RecipeArg::LqActiveBand => Recipe::LqActiveBand,
            RecipeArg::SemilinearBand => Recipe::SemilinearBand,
        }
    }
}

fn parse_mesh(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected NX,NT, got `{s}`"))?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("`{v}`: {e}"));
    Ok((parse(a)?, parse(b)?))
}

/// Runs a parsed command line; the error carries the exit code.
pub fn run(cli: Cli) -> CliResult<()> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    config.apply(&Overrides {
        out: cli.out.clone(),
        seed: cli.seed,
        mesh: cli.mesh,
    });
    let warm = cli.warm.as_deref();
    match cli.command {
        Command::Solve => cmd_solve(config, warm),
        Command::Sweep => cmd_sweep(config, warm),
        Command::Sosc => cmd_sosc(config, warm),
        Command::Verify { point } => cmd_verify(config, &point),
        Command::Gradcheck => cmd_gradcheck(config),
        Command::Mms { recipe } => cmd_mms(config, recipe.into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mesh_flag() {
        assert_eq!(parse_mesh("16,32"), Ok((16, 32)));
        assert!(parse_mesh("16").is_err());
        assert!(parse_mesh("a,2").is_err());
    }

    #[test]
    fn global_flags_after_subcommand() {
        let cli = Cli::try_parse_from(["paracon", "sweep", "--seed", "3", "--mesh", "8,4"]).unwrap();
        assert_eq!(cli.seed, Some(3));
        assert_eq!(cli.mesh, Some((8, 4)));
        assert!(matches!(cli.command, Command::Sweep));
    }
}
