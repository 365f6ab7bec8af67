//! Failure classes of a run and the exit status each one maps to.

use alphafair_core::{AllocError, CtmcError, FluidError, ManifoldError, NetworkError};

/// Exit status for malformed command lines (clap uses the same code).
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_NONCONVERGENCE: i32 = 4;
pub const EXIT_INVARIANT: i32 = 5;
pub const EXIT_IO: i32 = 6;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("solver did not converge: {0}")]
    NonConvergence(String),
    #[error("invariant violation: {0}")]
    Invariant(String),
    #[error("io error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Config(_) => EXIT_CONFIG,
            CliError::NonConvergence(_) => EXIT_NONCONVERGENCE,
            CliError::Invariant(_) => EXIT_INVARIANT,
            CliError::Io(_) => EXIT_IO,
        }
    }

    pub(crate) fn io(path: &std::path::Path, err: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }
}

impl From<NetworkError> for CliError {
    fn from(err: NetworkError) -> Self {
        CliError::Config(err.to_string())
    }
}

impl From<AllocError> for CliError {
    fn from(err: AllocError) -> Self {
        match err {
            AllocError::NonConvergence { .. } => CliError::NonConvergence(err.to_string()),
            _ => CliError::Usage(err.to_string()),
        }
    }
}

impl From<ManifoldError> for CliError {
    fn from(err: ManifoldError) -> Self {
        match err {
            ManifoldError::Alloc(e) => e.into(),
            ManifoldError::LiftNonConvergence { .. } => CliError::NonConvergence(err.to_string()),
            ManifoldError::Subcritical | ManifoldError::TopologyMismatch(_) => {
                CliError::Config(err.to_string())
            }
            ManifoldError::Length { .. } | ManifoldError::Negative { .. } => {
                CliError::Usage(err.to_string())
            }
        }
    }
}

impl From<FluidError> for CliError {
    fn from(err: FluidError) -> Self {
        match err {
            FluidError::Alloc(e) => e.into(),
            FluidError::Manifold(e) => e.into(),
            FluidError::GapIncrease { .. } => CliError::Invariant(err.to_string()),
            FluidError::Step(_) | FluidError::Horizon(_) | FluidError::Grid => {
                CliError::Usage(err.to_string())
            }
        }
    }
}

impl From<CtmcError> for CliError {
    fn from(err: CtmcError) -> Self {
        match err {
            CtmcError::Alloc(e) => e.into(),
            // the run was cut short before reaching its horizon
            CtmcError::EventCap(_) => CliError::NonConvergence(err.to_string()),
            _ => CliError::Usage(err.to_string()),
        }
    }
}
