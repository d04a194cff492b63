use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: row {row}: cannot parse {what}: {value:?}")]
    Parse {
        path: PathBuf,
        row: usize,
        what: &'static str,
        value: String,
    },

    #[error("data integrity: {0}")]
    Integrity(String),

    #[error("misaligned series: {0}")]
    Alignment(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("value {value} outside basis range [{min}, {max}]")]
    Domain { value: f64, min: f64, max: f64 },

    #[error("unknown covariate `{0}`")]
    UnknownCovariate(String),

    #[error("penalized normal matrix is not positive definite; try larger smoothing parameters")]
    Rank,

    #[error("degenerate fit: effective degrees of freedom {edf} >= n = {n}")]
    DegenerateFit { edf: f64, n: usize },

    #[error("optimizer did not converge after {iterations} iterations (gradient norm {gradient_norm:e})")]
    Convergence {
        iterations: usize,
        gradient_norm: f64,
    },

    #[error("shape mismatch in layer `{layer}`: expected {expected}, got {got}")]
    Shape {
        layer: String,
        expected: String,
        got: String,
    },

    #[error("training diverged at epoch {epoch}")]
    Training { epoch: usize },

    #[error("metric: {0}")]
    Metric(String),

    #[error("config: {0}")]
    Config(String),

    #[error("model `{model}` failed: {reason}")]
    Model { model: String, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for command-line use: 1 configuration, 2 data,
    /// 3 model failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parameter(_) | Error::UnknownCovariate(_) => 1,
            Error::Parse { .. }
            | Error::Integrity(_)
            | Error::Alignment(_)
            | Error::InsufficientData(_)
            | Error::Domain { .. }
            | Error::Io { .. }
            | Error::Csv(_)
            | Error::Json(_) => 2,
            Error::Rank
            | Error::DegenerateFit { .. }
            | Error::Convergence { .. }
            | Error::Shape { .. }
            | Error::Training { .. }
            | Error::Metric(_)
            | Error::Model { .. } => 3,
        }
    }
}
