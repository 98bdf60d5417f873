use std::path::PathBuf;

use mvsde_core::MvsdeError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] MvsdeError),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        Self::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| Self::Io { path, source }
    }

    /// Process exit status: 2 for rejected input, 3 for failures during a
    /// simulation, 1 for anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Core(e) if e.is_numerical() => 3,
            Self::Core(_) => 2,
            Self::Io { .. } | Self::Csv(_) | Self::Json(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_by_kind() {
        assert_eq!(CliError::config("x").exit_code(), 2);
        let numerical = MvsdeError::NonFiniteState { step: Some(3), t: 0.5 };
        assert_eq!(CliError::from(numerical).exit_code(), 3);
        let input = MvsdeError::QmciInput {
            step: 1,
            value: 2.0,
            lower: 0.0,
            upper: 1.0,
        };
        assert_eq!(CliError::from(input).exit_code(), 3);
        let rejected = MvsdeError::OutOfDomain { t: 3.0, end: 2.0 };
        assert_eq!(CliError::from(rejected).exit_code(), 2);
        let io = CliError::io("/x")(std::io::Error::other("disk"));
        assert_eq!(io.exit_code(), 1);
        assert!(io.to_string().starts_with("/x"));
    }
}
