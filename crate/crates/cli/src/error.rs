use std::process::ExitCode;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed input: {0}")]
    Format(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Self::Io {
            context: context.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.code())
    }

    pub fn code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            Self::Io { .. } | Self::Format(_) => 3,
            Self::Numeric(_) => 4,
        }
    }
}

impl From<sparseperm::Error> for CliError {
    fn from(e: sparseperm::Error) -> Self {
        use sparseperm::Error as E;
        match e {
            E::Config(_) | E::DimensionMismatch { .. } | E::TooLarge { .. } => {
                Self::Config(e.to_string())
            }
            E::InvalidInput(_) => Self::Format(e.to_string()),
            E::NonFinite(_) | E::OutOfSupport { .. } => Self::Numeric(e.to_string()),
        }
    }
}
