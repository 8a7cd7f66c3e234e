use thiserror::Error;

/// Failures of a run, split by the exit code they map to.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("selection mismatch: {0}")]
    Selection(String),
    #[error("i/o error: {0}")]
    Io(String),
    /// The constructor refused its own output (threshold breach).
    #[error("construction failed: {0}")]
    Construction(phaseloc_core::Error),
    #[error("check failed: {0}")]
    Check(String),
    #[error("non-finite number in report: {0}")]
    NonFinite(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Selection(_) | CliError::Io(_) => 2,
            CliError::Construction(_) | CliError::Check(_) | CliError::NonFinite(_) => 1,
        }
    }
}

pub(crate) fn io_err(context: impl std::fmt::Display) -> impl FnOnce(std::io::Error) -> CliError {
    move |e| CliError::Io(format!("{context}: {e}"))
}
