use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("solver: {0}")]
    Solver(paracon::Error),

    #[error("sweep finished with {valid} of {total} valid records")]
    PartialSweep { valid: usize, total: usize },

    #[error("verification failed: {0}")]
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Solver(_) => 2,
            CliError::PartialSweep { .. } => 3,
            CliError::Verification(_) => 4,
        }
    }
}

impl From<paracon::Error> for CliError {
    fn from(e: paracon::Error) -> Self {
        use paracon::Error as E;
        match e {
            E::Syntax { .. }
            | E::UnknownVariable { .. }
            | E::DisallowedVariable { .. }
            | E::NonSymmetric { .. }
            | E::InvalidDomain(_)
            | E::InvalidMesh(_)
            | E::MeshMismatch(_)
            | E::InvalidProblem(_)
            | E::InvalidPlan(_)
            | E::Recipe(_)
            | E::GridFile { .. }
            | E::Config(_)
            | E::ConstraintActive { .. }
            | E::Io(_)
            | E::Json(_) => CliError::Config(e.to_string()),
            other => CliError::Solver(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
