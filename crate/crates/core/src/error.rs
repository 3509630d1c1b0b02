use std::path::PathBuf;

use thiserror::Error;

use crate::network::{Frame, NodeId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot measure distance between {0:?} and {1:?} points")]
    FrameMismatch(Frame, Frame),

    #[error("node {0} does not exist")]
    NodeNotFound(NodeId),

    /// Invalid configuration. `path` is the dotted key of the offending value.
    #[error("{path}: {message}")]
    Config { path: String, message: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("curves are not aligned: lengths {left} and {right}")]
    Alignment { left: usize, right: usize },

    #[error("incomplete grid, missing cells: {}", .0.join(", "))]
    IncompleteGrid(Vec<String>),

    #[error("results in {dir} were produced by a different configuration (stored hash {stored}, current {current})")]
    StaleResults {
        dir: PathBuf,
        stored: String,
        current: String,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("{file}, row {row}: {message}")]
    Row {
        file: String,
        row: usize,
        message: String,
    },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}
