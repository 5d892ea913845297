use std::path::PathBuf;

use serde::Serialize;
use thiserror::Error;

/// Configuration problems, one variant per error class.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum ConfigError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("unknown key `{key}`{}", hint_suffix(.hint))]
    UnknownKey { key: String, hint: Option<String> },

    #[error("key `{key}` needs a unit suffix: expected `{expected}`")]
    UnitSuffix { key: String, expected: String },

    #[error("range violation: {0}")]
    Range(String),

    #[error("invalid value for `{key}`: {reason}")]
    InvalidValue { key: String, reason: String },

    #[error("missing required key `{0}`")]
    Missing(String),
}

fn hint_suffix(hint: &Option<String>) -> String {
    hint.as_ref().map(|h| format!(" ({h})")).unwrap_or_default()
}

impl ConfigError {
    pub fn class(&self) -> &'static str {
        match self {
            ConfigError::Syntax { .. } => "config.syntax",
            ConfigError::UnknownKey { .. } => "config.unknown-key",
            ConfigError::UnitSuffix { .. } => "config.unit-suffix",
            ConfigError::Range(_) => "config.range",
            ConfigError::InvalidValue { .. } => "config.invalid-value",
            ConfigError::Missing(_) => "config.missing",
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error(transparent)]
    Core(#[from] ddspec::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Data { path: PathBuf, message: String },

    #[error("export error: {0}")]
    Export(String),

    #[error("usage: {0}")]
    Usage(String),
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_IO: i32 = 4;

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn data(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        CliError::Data {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => EXIT_CONFIG,
            CliError::Core(e) if e.is_input_error() => EXIT_CONFIG,
            CliError::Core(_) => EXIT_NUMERICAL,
            CliError::Io { .. } | CliError::Data { .. } | CliError::Export(_) => EXIT_IO,
        }
    }

    pub fn class(&self) -> &'static str {
        match self {
            CliError::Config(c) => c.class(),
            CliError::Core(e) if e.is_input_error() => "input",
            CliError::Core(_) => "numerical",
            CliError::Io { .. } => "io",
            CliError::Data { .. } => "io.data",
            CliError::Export(_) => "io.export",
            CliError::Usage(_) => "usage",
        }
    }

    pub fn record(&self) -> ErrorRecord {
        ErrorRecord {
            class: self.class().to_string(),
            exit_code: self.exit_code(),
            message: self.to_string(),
        }
    }
}

/// Machine-readable error, printed to stderr as one JSON line and stored in
/// the run manifest.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct ErrorRecord {
    pub class: String,
    pub exit_code: i32,
    pub message: String,
}

pub type CliResult<T> = std::result::Result<T, CliError>;
