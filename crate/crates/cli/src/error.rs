use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    /// A truncation or convergence diagnostic exceeded its threshold; the
    /// results were still written.
    #[error("diagnostic: {0}")]
    Diagnostic(String),
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
    #[error("engine: {0}")]
    Engine(wgqed::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Diagnostic(_) => 3,
            CliError::Io { .. } | CliError::Engine(_) => 1,
        }
    }
}

impl From<wgqed::Error> for CliError {
    fn from(e: wgqed::Error) -> Self {
        match e {
            wgqed::Error::InvalidArgument(m) => CliError::Config(format!("invalid parameters: {m}")),
            wgqed::Error::Parse { line, message } => CliError::Config(format!("line {line}: {message}")),
            other => CliError::Engine(other),
        }
    }
}
