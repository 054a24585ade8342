//! Errors of the front end and their exit codes.

use std::path::{Path, PathBuf};

use bdarma_core::Error as ModelError;

/// Failure of a command. Validation problems exit with 1, runtime failures with 2.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{0}")]
    Invalid(String),
    #[error("cannot read {path}: {source}")]
    Input { path: PathBuf, source: std::io::Error },
    #[error("cannot write {path}: {source}")]
    Output { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{0}")]
    Failed(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn failed(msg: impl Into<String>) -> Self {
        Error::Failed(msg.into())
    }

    pub fn input(path: &Path, source: std::io::Error) -> Self {
        Error::Input {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn output(path: &Path, source: std::io::Error) -> Self {
        Error::Output {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Invalid(_) | Error::Input { .. } => 1,
            Error::Output { .. } | Error::Failed(_) => 2,
            Error::Model(e) => match e {
                ModelError::InvalidComposition(_)
                | ModelError::Domain(_)
                | ModelError::Shape { .. }
                | ModelError::Config(_)
                | ModelError::InsufficientData { .. }
                | ModelError::UnknownName { .. } => 1,
                _ => 2,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_split_validation_from_runtime() {
        assert_eq!(Error::invalid("x").exit_code(), 1);
        assert_eq!(Error::input(Path::new("a"), std::io::ErrorKind::NotFound.into()).exit_code(), 1);
        assert_eq!(Error::from(ModelError::Config("bad".into())).exit_code(), 1);
        assert_eq!(Error::from(ModelError::SimulationDiverged { t: 3 }).exit_code(), 2);
        assert_eq!(Error::failed("x").exit_code(), 2);
    }
}
