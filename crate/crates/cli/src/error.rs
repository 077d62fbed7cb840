use std::io;
use std::path::PathBuf;

/// Failure of a command, classified by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("numeric failure: {0}")]
    Numeric(fluxmech_core::Error),

    #[error("I/O error on {}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },

    /// A self-test criterion failed or a replay did not reproduce its outputs.
    #[error("{0}")]
    Check(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Check(_) => 1,
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io { .. } => 4,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<fluxmech_core::Error> for CliError {
    fn from(e: fluxmech_core::Error) -> Self {
        use fluxmech_core::Error as E;
        match e {
            E::InvalidParameter { .. } | E::DegenerateParameters => CliError::Config(e.to_string()),
            other => CliError::Numeric(other),
        }
    }
}
