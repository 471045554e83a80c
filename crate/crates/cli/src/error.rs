use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("validation: {path}: {message}")]
    Validation { path: String, message: String },

    #[error("{op}: {kind}: {source}")]
    Core {
        op: &'static str,
        kind: &'static str,
        #[source]
        source: fblab_core::Error,
    },

    #[error("missing manifest in {0}")]
    MissingManifest(PathBuf),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn core(op: &'static str) -> impl FnOnce(fblab_core::Error) -> CliError {
        move |source| CliError::Core {
            op,
            kind: source.kind(),
            source,
        }
    }

    /// 2 for invalid input, 3 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        use fblab_core::Error as E;
        match self {
            CliError::Validation { .. } | CliError::MissingManifest(_) => 2,
            CliError::Core { source, .. } => match source {
                E::NonConvergence { .. } | E::NonFinite { .. } | E::Unresolvable(_) | E::Empty(_) => 3,
                E::Io(_) | E::Csv(_) => 3,
                _ => 2,
            },
            CliError::Io(_) | CliError::Json(_) | CliError::Csv(_) => 3,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
