use std::io;

use thiserror::Error;

pub type Result<T, E = FddError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum FddError {
    #[error("input out of domain: {0}")]
    InputDomain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {context} at step {step}")]
    Numeric { context: String, step: usize },

    #[error("training diverged at epoch {epoch}: {message}")]
    Training { epoch: usize, message: String },

    #[error("parallel prediction unstable at step {step}: |y| = {magnitude:.3e}")]
    Instability { step: usize, magnitude: f64 },

    #[error("score undefined: {0}")]
    UndefinedScore(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<FddError>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl FddError {
    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        FddError::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }
}
