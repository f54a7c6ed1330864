use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("numerical failure: {0}")]
    Numerical(#[from] mlmc_core::Error),
    #[error("maximum level reached before the bias test passed ({0})")]
    LevelLimit(String),
    #[error("{0} validation check(s) failed")]
    ValidationFailed(usize),
}

impl CliError {
    /// Process exit status for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::ValidationFailed(_) => 1,
            Self::Config(_) | Self::Io { .. } => 2,
            Self::Numerical(_) | Self::LevelLimit(_) => 3,
        }
    }
}
