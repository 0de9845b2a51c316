use std::path::PathBuf;

use thiserror::Error;

use unlearn_core::analysis::AnalysisError;
use unlearn_core::corpus::CorpusError;
use unlearn_core::eval::EvalError;
use unlearn_core::model::{CheckpointError, ModelError};
use unlearn_core::unlearn::UnlearnError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("missing prerequisite for {stage}: {reason}")]
    MissingPrerequisite { stage: &'static str, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unlearning {method} in {language} diverged at step {step}; last finite model saved to {saved}")]
    Diverged {
        method: String,
        language: String,
        step: usize,
        saved: PathBuf,
    },
    #[error("{context}: {message}")]
    Runtime { context: String, message: String },
}

impl CliError {
    /// 2 for usage and configuration problems, 1 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::MissingPrerequisite { .. } => 2,
            _ => 1,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn runtime(context: impl Into<String>, err: impl std::fmt::Display) -> Self {
        CliError::Runtime {
            context: context.into(),
            message: err.to_string(),
        }
    }
}

macro_rules! runtime_from {
    ($($t:ty => $ctx:literal),*) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::runtime($ctx, e)
            }
        })*
    };
}

runtime_from!(
    CorpusError => "corpus",
    EvalError => "evaluation",
    AnalysisError => "analysis",
    ModelError => "model",
    CheckpointError => "checkpoint",
    UnlearnError => "training"
);
