use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{module}: {source}")]
    Module {
        module: &'static str,
        #[source]
        source: twoscale::Error,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    /// 2 for usage and configuration problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::Io { .. } => 2,
            CliError::Module { source, .. } => match source {
                twoscale::Error::EpsilonNotReciprocal(_)
                | twoscale::Error::InvalidArgument(_)
                | twoscale::Error::InvalidGeometry(_)
                | twoscale::Error::DofCap { .. } => 2,
                _ => 3,
            },
            CliError::Numerical(_) => 3,
        }
    }
}

/// Tags a core error with the module it came from.
pub trait InModule<T> {
    fn module(self, name: &'static str) -> Result<T, CliError>;
}

impl<T> InModule<T> for twoscale::Result<T> {
    fn module(self, name: &'static str) -> Result<T, CliError> {
        self.map_err(|source| CliError::Module { module: name, source })
    }
}

pub type CliResult<T> = Result<T, CliError>;
