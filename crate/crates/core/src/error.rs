use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("mesh graph is not connected ({components} components)")]
    Connectivity { components: usize },

    #[error("zero-length edge ({i}, {j}) with epsilon = 0")]
    Division { i: usize, j: usize },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("parse error in {path} at line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("node {node} has zero degree")]
    Degree { node: usize },

    #[error("graph is disconnected: {zero_modes} eigenvalues below the zero tolerance")]
    Disconnected { zero_modes: usize },

    #[error("eigensolver did not converge after {iterations} iterations")]
    Convergence { iterations: usize },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("missing file {0}")]
    MissingFile(PathBuf),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl AsRef<std::path::Path>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.as_ref().display().to_string(),
            line,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
