use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("ConfigInvalid: {field}: {message}")]
    ConfigInvalid { field: String, message: String },

    #[error("{context}: {source}")]
    Numerical {
        context: String,
        #[source]
        source: metastable::Error,
    },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// 2 for configuration problems, 3 for numerical failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ConfigInvalid { .. } => 2,
            CliError::Numerical { .. } => 3,
            CliError::Io { .. } => 1,
        }
    }
}

/// Attach a stage name to library errors.
pub trait Context<T> {
    fn context(self, what: &str) -> Result<T, CliError>;
}

impl<T> Context<T> for metastable::Result<T> {
    fn context(self, what: &str) -> Result<T, CliError> {
        self.map_err(|source| CliError::Numerical { context: what.to_string(), source })
    }
}

impl<T> Context<T> for std::io::Result<T> {
    fn context(self, what: &str) -> Result<T, CliError> {
        self.map_err(|source| CliError::Io { context: what.to_string(), source })
    }
}
