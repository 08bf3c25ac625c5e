use thiserror::Error;

/// Failures grouped by the exit code they map to.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical error: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl From<qmgeo::Error> for CliError {
    fn from(e: qmgeo::Error) -> Self {
        use qmgeo::Error::*;
        let msg = e.to_string();
        match e {
            InvalidParameter { .. } | IndexOutOfRange { .. } | DimensionMismatch { .. } => {
                CliError::Config(msg)
            }
            OutOfDomain { .. } | Parse { .. } | Io { .. } => CliError::Data(msg),
            SupportMismatch | Numerical { .. } => CliError::Numerical(msg),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
