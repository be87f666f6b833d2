use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("{context}: {source}")]
    Library {
        context: String,
        #[source]
        source: permdiag::Error,
    },

    #[error("cannot write {path}: {source}")]
    Output {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{0} oracle check(s) failed")]
    OracleFailures(usize),

    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    /// 0 success, 1 configuration, 2 data, 3 internal or failed checks.
    pub fn exit_code(&self) -> i32 {
        use permdiag::Error as E;
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Library { source, .. } => match source {
                E::Io { .. } | E::Csv(_) | E::SchemaMismatch(_) | E::NonNumeric { .. } | E::NonPositiveCount(_) => 2,
                E::InvalidParameter(_) => 1,
                _ => 3,
            },
            CliError::Output { .. } | CliError::OracleFailures(_) | CliError::Internal(_) => 3,
        }
    }
}

/// Attaches replicate or stage context to library errors.
pub trait Context<T> {
    fn context(self, what: impl FnOnce() -> String) -> Result<T, CliError>;
}

impl<T> Context<T> for permdiag::Result<T> {
    fn context(self, what: impl FnOnce() -> String) -> Result<T, CliError> {
        self.map_err(|source| CliError::Library {
            context: what(),
            source,
        })
    }
}
