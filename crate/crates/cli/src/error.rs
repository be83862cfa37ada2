use thiserror::Error;

/// Anything that stops a scenario from being run at all. Maps to exit code 2.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(String),
    #[error("config schema error: {0}")]
    Schema(String),
    #[error("{key}: {message}")]
    Invalid { key: String, message: String },
}

impl ConfigError {
    pub fn at(key: impl Into<String>, message: impl std::fmt::Display) -> Self {
        Self::Invalid {
            key: key.into(),
            message: message.to_string(),
        }
    }
}

/// Failure to write outputs after a run.
#[derive(Debug, Error)]
#[error("cannot write {path}: {message}")]
pub struct EmitError {
    pub path: String,
    pub message: String,
}
