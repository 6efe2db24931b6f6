use thiserror::Error;

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Config(String),
    /// A required input file, checkpoint or feature type is absent.
    #[error("{0}")]
    Missing(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn config(m: impl Into<String>) -> Self {
        CliError::Config(m.into())
    }

    pub fn missing(m: impl Into<String>) -> Self {
        CliError::Missing(m.into())
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 2,
            CliError::Config(_) | CliError::Missing(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl From<ilrec::Error> for CliError {
    fn from(e: ilrec::Error) -> Self {
        use ilrec::Error as E;
        let msg = e.to_string();
        match e {
            E::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => CliError::Missing(msg),
            E::Io { .. } => CliError::Io(msg),
            E::NonFinite { .. } => CliError::Numeric(msg),
            E::MissingFeatureType(_) => CliError::Missing(msg),
            E::Parse { .. }
            | E::Format { .. }
            | E::Config(_)
            | E::InvalidInput(_)
            | E::DimensionMismatch { .. } => CliError::Config(msg),
        }
    }
}
