use std::path::PathBuf;

use thiserror::Error;

use crate::autodiff::TensorError;
use crate::baselines::BaselineError;
use crate::dataset::DatasetError;
use crate::dynamics::DynamicsError;
use crate::ingest::IngestError;
use crate::metrics::MetricsError;
use crate::model::ModelError;
use crate::qc::QcError;

/// Any failure surfaced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Qc(#[from] QcError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable machine-readable name of the failure.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "ConfigError",
            Error::Ingest(e) => e.kind(),
            Error::Qc(e) => e.kind(),
            Error::Dataset(e) => e.kind(),
            Error::Tensor(e) => e.kind(),
            Error::Dynamics(e) => e.kind(),
            Error::Model(e) => e.kind(),
            Error::Baseline(e) => e.kind(),
            Error::Metrics(e) => e.kind(),
            Error::Io { .. } => "Io",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
