use std::fmt;
use std::path::Path;

use cebag_core::evaluate::EvalError;
use cebag_core::io::CorpusError;
use cebag_core::metrics::MetricsError;
use cebag_core::ValidationError;

/// Process exit statuses. Stable across releases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    PmiViolation = 1,
    InvalidInput = 2,
    Degenerate = 3,
    EndpointIncapable = 4,
    PartialFailure = 5,
}

#[derive(Debug)]
pub struct CliError {
    pub exit: Exit,
    pub message: String,
}

impl CliError {
    pub fn new(exit: Exit, message: impl Into<String>) -> Self {
        Self {
            exit,
            message: message.into(),
        }
    }

    pub fn input(message: impl Into<String>) -> Self {
        Self::new(Exit::InvalidInput, message)
    }

    pub fn corpus(path: &Path, err: CorpusError) -> Self {
        Self::input(format!("{}: {err}", path.display()))
    }

    pub fn io(action: &str, path: &Path, err: std::io::Error) -> Self {
        Self::input(format!("cannot {action} {}: {err}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<EvalError> for CliError {
    fn from(err: EvalError) -> Self {
        let exit = match &err {
            EvalError::Metrics(MetricsError::DegenerateLabels { .. })
            | EvalError::Metrics(MetricsError::Empty)
            | EvalError::Validation(ValidationError::EmptyCorpus) => Exit::Degenerate,
            _ => Exit::InvalidInput,
        };
        let message = match exit {
            Exit::Degenerate => format!("degenerate evaluation: {err}"),
            _ => err.to_string(),
        };
        Self::new(exit, message)
    }
}
