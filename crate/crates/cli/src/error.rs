use geofuse_core::ErrorClass;
use thiserror::Error;

/// Front-end error; [`CliError::exit_code`] maps it to the process status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("stale artifact: {0}")]
    Stale(String),

    #[error("verification failed: {0}")]
    Verify(String),

    #[error(transparent)]
    Core(#[from] geofuse_core::Error),

    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl CliError {
    /// 2 for configuration errors, 3 for data errors, 4 for numerical errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) | CliError::Stale(_) | CliError::Io { .. } => 3,
            CliError::Verify(_) => 4,
            CliError::Core(e) => match e.class() {
                ErrorClass::Config => 2,
                ErrorClass::Data => 3,
                ErrorClass::Numerical => 4,
            },
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_class() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        assert_eq!(CliError::Stale("x".into()).exit_code(), 3);
        assert_eq!(CliError::Core(geofuse_core::Error::Config("x".into())).exit_code(), 2);
        assert_eq!(CliError::Core(geofuse_core::Error::Parse { line: 1, message: "x".into() }).exit_code(), 3);
        assert_eq!(CliError::Core(geofuse_core::Error::NotPositiveDefinite { pivot: 0, value: -1.0 }).exit_code(), 4);
    }
}
