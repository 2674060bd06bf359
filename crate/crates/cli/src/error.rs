use thiserror::Error;

use eventscope::pipeline::{FailureClass, PipelineError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("provider error: {0}")]
    Provider(String),
    #[error("data error: {0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Provider(_) => 3,
            CliError::Data(_) => 4,
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e.class() {
            FailureClass::Config => CliError::Config(e.to_string()),
            FailureClass::Provider => CliError::Provider(e.to_string()),
            FailureClass::Data => CliError::Data(e.to_string()),
        }
    }
}
