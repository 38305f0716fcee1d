use thiserror::Error;

/// Failures of a CLI run; each maps to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("i/o: {0}")]
    Io(String),

    #[error("synthesis: {0}")]
    Synthesis(parstab::Error),

    #[error("certification: {0}")]
    Certification(String),

    #[error("simulation: {0}")]
    Divergence(parstab::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Synthesis(_) => 2,
            CliError::Certification(_) => 3,
            CliError::Divergence(_) => 4,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
