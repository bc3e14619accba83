use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Core(#[from] odcs_core::Error),
    #[error("line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("{}: {source}", path.display())]
    File {
        path: PathBuf,
        #[source]
        source: odcs_core::Error,
    },
    #[error("{0}")]
    Checkpoint(String),
    #[error("checkpoint format version {found}, this build reads version {expected}")]
    Version { found: u32, expected: u32 },
    #[error("non-finite loss at step {step}")]
    Diverged { step: u64 },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// Attaches the offending file to a core error.
    pub(crate) fn at(path: impl Into<PathBuf>) -> impl FnOnce(odcs_core::Error) -> Self {
        let path = path.into();
        move |source| CliError::File { path, source }
    }

    /// Short stable identifier printed in the error line.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) | CliError::File { source: e, .. } => match e {
                odcs_core::Error::Dimension { .. } => "dimension",
                odcs_core::Error::NonFinite { .. } => "non_finite",
                odcs_core::Error::DegenerateStatistics { .. } => "degenerate_statistics",
                odcs_core::Error::Contract(_) => "contract",
                odcs_core::Error::Parse { .. } => "parse",
                odcs_core::Error::InvalidBox(_) => "invalid_box",
                odcs_core::Error::UndefinedCdr => "undefined_cdr",
                odcs_core::Error::Io(_) => "io",
            },
            CliError::Config { .. } => "config",
            CliError::Checkpoint(_) => "checkpoint",
            CliError::Version { .. } => "version",
            CliError::Diverged { .. } => "diverged",
            CliError::Io { .. } => "io",
            CliError::Usage(_) => "usage",
        }
    }

    /// `error kind=<kind> msg=<message>` with line breaks flattened.
    pub fn line(&self) -> String {
        let msg = self.to_string().replace(['\n', '\r'], " ");
        format!("error kind={} msg={msg}", self.kind())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
