use thiserror::Error;

/// Problems with user-supplied configuration files and values.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("whitelist line {line}: {message}")]
    Whitelist { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
}
