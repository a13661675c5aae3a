use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = MgaError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum MgaError {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("state error: {0}")]
    State(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    /// One entry per rejected row of a line-oriented input file.
    #[error("{} malformed row(s) in {}: {}", .errors.len(), .path.display(), summarize(.errors))]
    Load { path: PathBuf, errors: Vec<RowError> },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowError {
    /// 1-based line number in the source file.
    pub line: usize,
    pub message: String,
}

fn summarize(errors: &[RowError]) -> String {
    errors
        .iter()
        .map(|e| format!("line {}: {}", e.line, e.message))
        .collect::<Vec<_>>()
        .join("; ")
}

impl MgaError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        MgaError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            MgaError::Config(_) => 2,
            MgaError::Data(_) | MgaError::Load { .. } | MgaError::Io { .. } | MgaError::Geometry(_) => 3,
            MgaError::State(_) | MgaError::Precondition(_) => 4,
            MgaError::Dimension(_) | MgaError::Numeric(_) | MgaError::Contract(_) => 1,
        }
    }

    /// Short stable identifier for machine-parsable error lines.
    pub fn code_name(&self) -> &'static str {
        match self {
            MgaError::Dimension(_) => "dimension",
            MgaError::State(_) => "state",
            MgaError::Numeric(_) => "numeric",
            MgaError::Contract(_) => "contract",
            MgaError::Geometry(_) => "geometry",
            MgaError::Precondition(_) => "precondition",
            MgaError::Config(_) => "config",
            MgaError::Data(_) => "data",
            MgaError::Load { .. } => "load",
            MgaError::Io { .. } => "io",
        }
    }
}

macro_rules! ensure {
    ($cond:expr, $variant:ident, $($fmt:tt)+) => {
        if !$cond {
            return Err($crate::error::MgaError::$variant(format!($($fmt)+)));
        }
    };
}

pub(crate) use ensure;
