//! Run orchestration for the dimix engine: config parsing, experiment
//! presets, multi-seed sweeps, CSV/JSON emission, and the theory-check
//! suite runner.

pub mod commands;
pub mod output;
pub mod presets;
pub mod theory;

/// Process-level outcome, mapped onto exit codes by the binary:
/// 0 success, 1 validation/check failure, 2 divergence, 3 I/O.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Divergence(String),
    Io(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(msg) => write!(f, "validation error: {msg}"),
            CliError::Divergence(msg) => write!(f, "divergence: {msg}"),
            CliError::Io(msg) => write!(f, "io error: {msg}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Divergence(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
