use std::path::PathBuf;

use spnet_core::metrics::MetricsError;
use spnet_core::model::ModelError;
use spnet_core::tensor::io::WeightsError;
use spnet_core::tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Validation(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Image { path: PathBuf, message: String },
    #[error("non-finite {what} at epoch {epoch}; last good weights kept")]
    NonFinite { what: String, epoch: usize },
    #[error("gradient check failed: max relative error {max_rel_err:.3e} over {failures} failing samples")]
    GradcheckBreach { max_rel_err: f64, failures: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Weights(#[from] WeightsError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

impl HarnessError {
    pub fn validation(msg: impl Into<String>) -> Self {
        HarnessError::Validation(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.into(), source }
    }

    /// Process exit status: 3 for numerical failures, 4 for a gradient-check
    /// breach, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::NonFinite { .. } => 3,
            HarnessError::GradcheckBreach { .. } => 4,
            _ => 2,
        }
    }
}
