use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value in layer {layer} ({stage})")]
    NonFinite { layer: usize, stage: &'static str },

    #[error("parameter layouts differ: {0}")]
    ManifestMismatch(String),

    #[error("weights are not on the simplex: {0}")]
    Simplex(String),

    #[error("idx file {path:?}: bad magic {found:#010x}, expected {expected:#010x}")]
    BadMagic {
        path: PathBuf,
        expected: u32,
        found: u32,
    },

    #[error("idx file {path:?} truncated: need {needed} bytes, have {available}")]
    Truncated {
        path: PathBuf,
        needed: usize,
        available: usize,
    },

    #[error("idx item counts disagree: {images} images vs {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("infeasible partition: {0}")]
    Infeasible(String),

    #[error("invalid value for `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("training diverged at step {step}: {what} is not finite")]
    Diverged { step: usize, what: &'static str },

    #[error("replay buffer holds {len} transitions, batch needs {needed}")]
    Underfull { len: usize, needed: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("missing file {0:?}")]
    MissingFile(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Coarse category used by the CLI to pick an exit code.
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config { .. } => ErrorCategory::Config,
            Error::BadMagic { .. }
            | Error::Truncated { .. }
            | Error::CountMismatch { .. }
            | Error::MissingFile(_)
            | Error::Checkpoint(_)
            | Error::Io(_) => ErrorCategory::Input,
            Error::NonFinite { .. } | Error::Diverged { .. } => ErrorCategory::Numeric,
            _ => ErrorCategory::Internal,
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.category().exit_code()
    }

    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Input,
    Numeric,
    Internal,
}

impl ErrorCategory {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Internal => 1,
            ErrorCategory::Config => 2,
            ErrorCategory::Input => 3,
            ErrorCategory::Numeric => 4,
        }
    }
}
