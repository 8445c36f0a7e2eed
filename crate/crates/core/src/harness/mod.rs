//! Experiment runner: configuration, cached training stages, evaluation
//! sweeps and report emission.

mod cache;
mod config;
mod evaluate;
mod pipeline;
mod report;

pub use cache::{StageCache, StageOutput};
pub use config::{EvaluationConfig, ExperimentConfig, FinetuneStage, IdentifierStage, TransitionStage};
pub use evaluate::{allocate, evaluate, opponent_schedule};
pub use pipeline::{FinetuneSummary, IdentifierSummary, Pipeline, PipelineSummary, TransitionSummary};
pub use report::{
    aggregate, read_transcripts, verify_report, write_transcripts, EvaluationReport, MetricSummary, ReportRow,
};

use serde::Serialize;
use thiserror::Error;

use crate::environment::EnvError;
use crate::managers::TrainError;
use crate::neural::NeuralError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("toml: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("checkpoint: {0}")]
    Neural(#[from] NeuralError),
    #[error("report mismatch: {0}")]
    Verify(String),
}

impl HarnessError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Written to `error.json` in the run directory when a stage fails.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorRecord {
    pub stage: String,
    pub kind: String,
    pub message: String,
}

impl ErrorRecord {
    pub fn new(stage: &str, error: &HarnessError) -> Self {
        let kind = match error {
            HarnessError::Config(_) => "config",
            HarnessError::Io { .. } => "io",
            HarnessError::Json(_) | HarnessError::Toml(_) | HarnessError::Csv(_) => "format",
            HarnessError::Train(_) => "train",
            HarnessError::Env(_) => "environment",
            HarnessError::Neural(_) => "checkpoint",
            HarnessError::Verify(_) => "verify",
        };
        ErrorRecord {
            stage: stage.to_string(),
            kind: kind.to_string(),
            message: error.to_string(),
        }
    }
}

pub(crate) fn write_file(path: &std::path::Path, contents: impl AsRef<[u8]>) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| HarnessError::io(parent, e))?;
    }
    std::fs::write(path, contents).map_err(|e| HarnessError::io(path, e))
}

pub(crate) fn read_file(path: &std::path::Path) -> Result<String, HarnessError> {
    std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))
}

pub(crate) fn write_json(path: &std::path::Path, value: &impl Serialize) -> Result<(), HarnessError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text)
}
