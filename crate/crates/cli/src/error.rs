use std::path::Path;

use dlvsim::metrics::MetricsError;
use dlvsim::models::ModelError;
use dlvsim::panel::PanelError;
use dlvsim::pca::PcaError;
use dlvsim::sampling::SamplingError;
use dlvsim::training::TrainError;

/// Command failure; [`CliError::exit_code`] maps it to the process status.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config {field}: {msg}")]
    Config { field: String, msg: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Panel(#[from] PanelError),
    #[error(transparent)]
    Pca(#[from] PcaError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{0}")]
    Input(String),
    /// Non-finite values during training or sampling.
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numeric(_) => 3,
            _ => 2,
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::NonFinite { .. } => CliError::Numeric(e.to_string()),
            TrainError::Model(m) => CliError::Model(m),
            TrainError::Config(msg) => CliError::Config { field: "train".into(), msg },
            TrainError::NoData => CliError::Input(e.to_string()),
        }
    }
}
