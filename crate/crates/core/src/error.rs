use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid network shape: {0}")]
    InvalidShape(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("train-mode forward with dropout requires an rng")]
    MissingRng,
    #[error("invalid maze layout: {0}")]
    InvalidLayout(String),
    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },
    #[error("goal unreachable from start")]
    Unreachable,
    #[error("negative loss {0}")]
    NegativeLoss(f64),
    #[error("EWC penalty requires a fisher estimate")]
    MissingFisher,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("task {task} ({phase}): {source}")]
    Stream {
        task: usize,
        phase: String,
        #[source]
        source: Box<Error>,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_task(self, task: usize, phase: impl Into<String>) -> Self {
        Error::Stream {
            task,
            phase: phase.into(),
            source: Box::new(self),
        }
    }
}
