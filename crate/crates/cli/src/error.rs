use envcore::EnvError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Unreadable or malformed input, with the file and location.
    #[error("{0}")]
    Data(String),
    #[error("{context}: {source}")]
    Fit { context: String, source: EnvError },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl CliError {
    pub fn data(msg: impl Into<String>) -> Self {
        CliError::Data(msg.into())
    }

    pub fn fit(context: impl Into<String>) -> impl FnOnce(EnvError) -> Self {
        let context = context.into();
        move |source| CliError::Fit { context, source }
    }

    pub fn io(path: impl Into<String>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    /// 3 for optimizer convergence failures, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Fit { source, .. } if source.is_convergence() => 3,
            _ => 2,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
