//! Crate-wide error type.

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Shape disagreement between a weight vector, batch, or dataset and the
    /// model spec it is used with.
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    /// A configuration field failed validation. `field` names the offending
    /// field so callers can emit field-level diagnostics.
    #[error("invalid value for `{field}`: {message}")]
    InvalidConfig { field: String, message: String },

    #[error("{what} must not be empty")]
    Empty { what: &'static str },

    #[error("split fractions must sum to 1 (got {sum})")]
    BadFractions { sum: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed CSV input; `line` is 1-based.
    #[error("{path} line {line}: {message}")]
    CsvFormat {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("infeasible partition: hospital {hospital} would receive no samples of class {class}")]
    InfeasiblePartition { hospital: u32, class: u32 },

    #[error("duplicate hospital id {0}")]
    DuplicateHospital(u32),

    #[error("checkpoint format error: {0}")]
    CheckpointFormat(String),

    #[error("checkpoint payload truncated: expected {expected} bytes, got {actual}")]
    CheckpointTruncated { expected: usize, actual: usize },

    #[error(
        "manifest version mismatch: reader supports version {supported}, file declares {found}"
    )]
    ManifestVersion { supported: u32, found: u32 },

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("round log error: {0}")]
    RoundLog(String),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors a CLI should report as bad configuration rather than a
    /// runtime failure.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidConfig { .. } | Error::BadFractions { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
