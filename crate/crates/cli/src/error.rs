use graphtrip_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("missing dependency: {0}")]
    Missing(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// An upstream artifact differs from what its manifest recorded.
    #[error("provenance check failed: {0}")]
    HashMismatch(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Core(CoreError),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Missing(_) | CliError::HashMismatch(_) => 3,
            CliError::Numerical(_) => 4,
            CliError::Io(_) | CliError::Core(_) => 1,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Config(m) => CliError::Config(m),
            CoreError::NonFinite(_) | CoreError::ZeroNorm(_) => CliError::Numerical(e.to_string()),
            CoreError::Io { ref source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
                CliError::Missing(e.to_string())
            }
            other => CliError::Core(other),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Config(e.to_string())
    }
}
