use thiserror::Error;

/// Failures of one CLI run, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] fracctl::Error),

    #[error("{0}")]
    Input(String),

    #[error("{0}")]
    NotConverged(String),

    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
}

impl CliError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io { context: context.into(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(fracctl::Error::NotControllable { .. }) => 2,
            CliError::Core(_) | CliError::Input(_) => 3,
            CliError::NotConverged(_) => 4,
            CliError::Io { .. } => 5,
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => CliError::io("csv", io),
            other => CliError::Input(format!("csv: {other:?}")),
        }
    }
}
