//! Versioned JSON artifacts shared by the weight, ensemble and table files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::FORMAT_VERSION;

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported format version {found} (this build reads version {expected})")]
    UnsupportedVersion { found: u64, expected: u32 },
    #[error("invalid field `{field}`: {message}")]
    Invalid { field: String, message: String },
}

impl PersistError {
    pub(crate) fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Invalid {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl From<serde_json::Error> for PersistError {
    fn from(e: serde_json::Error) -> Self {
        PersistError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}

/// Pretty-printed JSON of an artifact.
pub fn to_json<T: Serialize>(value: &T) -> String {
    // Serialization of plain data structs cannot fail.
    serde_json::to_string_pretty(value).expect("serializable artifact")
}

pub fn write_file(path: impl AsRef<Path>, contents: &str) -> Result<(), PersistError> {
    let path = path.as_ref();
    fs::write(path, contents).map_err(|source| PersistError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_file(path: impl AsRef<Path>) -> Result<String, PersistError> {
    let path = path.as_ref();
    fs::read_to_string(path).map_err(|source| PersistError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parses a document carrying a top-level `version` field, rejecting other versions
/// before the body is interpreted.
pub(crate) fn from_versioned_json<T: DeserializeOwned>(text: &str) -> Result<T, PersistError> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    match value.get("version").and_then(|v| v.as_u64()) {
        Some(v) if v == u64::from(FORMAT_VERSION) => {}
        Some(found) => {
            return Err(PersistError::UnsupportedVersion {
                found,
                expected: FORMAT_VERSION,
            })
        }
        None => return Err(PersistError::invalid("version", "missing or not an integer")),
    }
    // Re-parse from text so that errors keep their line/column positions.
    Ok(serde_json::from_str(text)?)
}
