use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix function undefined: eigenvector condition estimate {condition:.3e} exceeds {limit:.3e}")]
    IllConditionedEigenvectors { condition: f64, limit: f64 },

    #[error("invalid structure: {0}")]
    Structure(String),

    #[error("input is not real symmetric: {0}")]
    NotSymmetric(String),

    #[error("complex data where real data is required: {0}")]
    NotReal(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("fixed-rank retraction collapsed: sigma_r = {sigma_r:.3e}")]
    RankCollapse { sigma_r: f64 },

    #[error("singular matrix encountered at {0}")]
    Singular(String),

    #[error("newton iteration did not converge after {iterations} steps (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("bound violated in {suite}: {detail}")]
    BoundViolation { suite: String, detail: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
