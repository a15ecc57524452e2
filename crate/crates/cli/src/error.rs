use thiserror::Error;

use crate::config::ConfigError;

/// Every failure the binary can report, mapped onto a stable exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("{0}")]
    Unstable(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            CliError::Unstable(_) => 3,
            CliError::Numerical(_) => 4,
            CliError::Io(_) => 5,
        }
    }

    pub fn io(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

impl From<aiamd::Error> for CliError {
    fn from(e: aiamd::Error) -> Self {
        use aiamd::Error as E;
        match e {
            E::UnstableStepSize { .. } => CliError::Unstable(e.to_string()),
            E::NonFiniteEnergy { .. }
            | E::ConstraintNonConvergence { .. }
            | E::CoincidentParticles { .. }
            | E::SingularConstraintJacobian => CliError::Numerical(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}
