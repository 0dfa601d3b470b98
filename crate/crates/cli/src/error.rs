use std::path::PathBuf;

use exitmass_core::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Malformed or invalid configuration; `line` is 1-based when known.
    #[error("{}{message}", location(path, *line))]
    Config { path: Option<PathBuf>, line: Option<usize>, message: String },

    #[error("solver did not converge: {0}")]
    Solver(CoreError),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("Monte-Carlo check failed: {0}")]
    MonteCarlo(String),

    #[error("verification failed: {0}")]
    Verify(String),

    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{0}")]
    Core(CoreError),
}

fn location(path: &Option<PathBuf>, line: Option<usize>) -> String {
    match (path, line) {
        (Some(p), Some(l)) => format!("{}:{l}: ", p.display()),
        (Some(p), None) => format!("{}: ", p.display()),
        (None, Some(l)) => format!("line {l}: "),
        (None, None) => String::new(),
    }
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self::Config { path: None, line: None, message: message.into() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Verify(_) => 1,
            Self::Config { .. } | Self::Io { .. } => 2,
            Self::Solver(_) => 3,
            Self::Invariant(_) => 4,
            Self::MonteCarlo(_) => 5,
            Self::Core(e) => match e {
                CoreError::NoConvergence { .. }
                | CoreError::DivergentPicard { .. }
                | CoreError::CurveFailures { .. }
                | CoreError::Integration(_) => 3,
                CoreError::StepBudget { .. } => 5,
                _ => 2,
            },
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::NoConvergence { .. } | CoreError::DivergentPicard { .. } | CoreError::CurveFailures { .. } => {
                Self::Solver(e)
            }
            other => Self::Core(other),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
