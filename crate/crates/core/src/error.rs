use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is missing, unknown, or violates an invariant.
    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("failed to parse config: {0}")]
    Toml(#[from] toml::de::Error),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Runtime(String),
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    /// Process exit code for the CLI: 1 for configuration problems, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Toml(_) | Error::Dimension { .. } => 1,
            Error::Io { .. } | Error::Runtime(_) => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
