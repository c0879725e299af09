use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("password is empty")]
    EmptyPassword,

    #[error("unsupported character {code_point:#x} at position {position}")]
    UnsupportedCharacter { position: usize, code_point: u32 },

    #[error("input count {0} is shorter than one 7-bit character")]
    InvalidInputCount(usize),

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("training did not converge after {epochs} epochs (last error {final_error:e})")]
    NoConvergence {
        epochs: usize,
        final_error: f64,
        /// Per-epoch `|target - output|`, kept for diagnostics.
        curve: Vec<f64>,
    },

    #[error("I/O failure on {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("non-finite value in {field} cannot be serialized")]
    SerializationOverflow { field: String },

    #[error("checksum mismatch: stored {stored:016x}, computed {computed:016x}")]
    ChecksumMismatch { stored: u64, computed: u64 },

    #[error("unsupported format version {0:?}")]
    VersionUnsupported(String),

    #[error("malformed field {key:?} on line {line}: {reason}")]
    MalformedField { line: usize, key: String, reason: String },

    #[error("malformed log line {line}: {reason}")]
    MalformedLogLine { line: usize, reason: String },

    #[error("invalid profile: {0}")]
    InvalidProfile(String),

    #[error("reset denied")]
    ResetDenied,

    #[error("hidden-layer token is required for this template")]
    MissingToken,

    #[error("profile {0} is locked by another process")]
    ProfileBusy(PathBuf),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::IoFailure {
            path: path.into(),
            source,
        }
    }
}
