use thiserror::Error;

use crate::manifold::ManifoldKind;

/// Errors produced by the filtering toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("manifold mismatch: {left:?} vs {right:?}")]
    ManifoldMismatch {
        left: ManifoldKind,
        right: ManifoldKind,
    },

    #[error("degenerate circular mean: resultant length {0:e} below threshold")]
    DegenerateMean(f64),

    #[error("unsupported manifold {manifold:?}: {reason}")]
    UnsupportedManifold {
        manifold: ManifoldKind,
        reason: String,
    },

    #[error("gain solver configuration error: {0}")]
    Config(String),

    #[error("gain solver failed: {0}")]
    SolverFailure(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("all particle weights underflowed to zero")]
    DegenerateWeights,

    #[error("CFL condition cannot be met within {max_substeps} sub-steps (needed {needed})")]
    Cfl { needed: usize, max_substeps: usize },

    #[error("density has zero total mass")]
    ZeroMass,

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("config error: {0}")]
    Validation(String),

    #[error("config parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::ManifoldMismatch { .. } => "manifold_mismatch",
            Error::DegenerateMean(_) => "degenerate_mean",
            Error::UnsupportedManifold { .. } => "unsupported_manifold",
            Error::Config(_) => "gain_config",
            Error::SolverFailure(_) => "solver_failure",
            Error::Domain(_) => "domain",
            Error::DegenerateWeights => "degenerate_weights",
            Error::Cfl { .. } => "cfl",
            Error::ZeroMass => "zero_mass",
            Error::LengthMismatch(_) => "length_mismatch",
            Error::Validation(_) => "validation",
            Error::Parse(_) => "parse",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
