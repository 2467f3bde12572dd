use std::path::PathBuf;

/// Errors from the driver, each mapped to a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Core(#[from] clava_core::Error),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{0} already exists (use --force to overwrite)")]
    Exists(PathBuf),
    #[error("{path}: corrupt model file: {reason}")]
    CorruptModel { path: PathBuf, reason: String },
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    pub fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Self::Json { path: path.into(), source }
    }

    pub fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Self::Csv { path: path.into(), source }
    }

    /// 2 for invalid data or configuration, 3 for training and sampling failures, 4 for IO.
    pub fn exit_code(&self) -> i32 {
        use clava_core::Error as E;
        match self {
            CliError::Core(
                E::MissingTable(_)
                | E::UnknownTable(_)
                | E::UnknownColumn { .. }
                | E::DuplicatePrimaryKey { .. }
                | E::DanglingForeignKey { .. }
                | E::CycleDetected(_)
                | E::TypeParseError { .. }
                | E::InvalidSchema(_)
                | E::EmptyTable(_)
                | E::BadRange(_),
            )
            | CliError::Config(_)
            | CliError::Exists(_) => 2,
            CliError::Core(_) => 3,
            CliError::Io { .. } | CliError::Csv { .. } | CliError::Json { .. } | CliError::CorruptModel { .. } => 4,
        }
    }
}
