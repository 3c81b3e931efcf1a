use affine_qmle::QmleError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io(_) => 1,
        }
    }

    /// Library error raised while handling the config key `key`.
    pub fn at(key: &str, e: QmleError) -> Self {
        match e {
            QmleError::Numeric(m) | QmleError::Singular(m) => CliError::Numeric(m),
            other => CliError::Config(format!("{key}: {other}")),
        }
    }
}

impl From<QmleError> for CliError {
    fn from(e: QmleError) -> Self {
        match e {
            QmleError::Numeric(m) | QmleError::Singular(m) => CliError::Numeric(m),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        if e.is_io_error() {
            CliError::Io(e.to_string())
        } else {
            CliError::Config(format!("malformed CSV: {e}"))
        }
    }
}
