use thiserror::Error;

/// Errors raised by the lattice, solvers and verifiers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid on axis {axis}: {reason}")]
    InvalidGrid { axis: usize, reason: String },

    #[error("non-finite value {value} at node {index}")]
    NonFinite { index: usize, value: f64 },

    #[error("negative value {value} at node {index} in a u-role field")]
    NegativeValue { index: usize, value: f64 },

    #[error("ball (center {center:?}, radius {radius}) escapes the grid")]
    BallOutsideGrid { center: Vec<f64>, radius: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("conjugate gradient did not converge: {iterations} iterations, residual {residual:e} > {tolerance:e}")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        tolerance: f64,
    },

    #[error("precondition `{name}` failed: {detail}")]
    Precondition { name: &'static str, detail: String },

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("invalid parameter `{name}`: {detail}")]
    InvalidParameter { name: &'static str, detail: String },

    #[error("resolution: {0}")]
    Unresolvable(String),

    #[error("empty set: {0}")]
    Empty(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn pre(name: &'static str, detail: impl Into<String>) -> Self {
        Error::Precondition {
            name,
            detail: detail.into(),
        }
    }

    pub(crate) fn param(name: &'static str, detail: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            detail: detail.into(),
        }
    }

    /// Short stable identifier, used by the CLI to report failures.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidGrid { .. } => "invalid_grid",
            Error::NonFinite { .. } => "non_finite",
            Error::NegativeValue { .. } => "negative_value",
            Error::BallOutsideGrid { .. } => "ball_outside_grid",
            Error::GridMismatch(_) => "grid_mismatch",
            Error::NonConvergence { .. } => "non_convergence",
            Error::Precondition { .. } => "precondition",
            Error::NotApplicable(_) => "not_applicable",
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::Unresolvable(_) => "unresolvable",
            Error::Empty(_) => "empty",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
