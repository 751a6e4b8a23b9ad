use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{file}: missing column `{column}`")]
    MissingColumn { file: String, column: String },

    #[error("dangling reference to `{0}`")]
    DanglingReference(String),

    #[error("{0} is empty")]
    EmptyTable(String),

    #[error("duplicate identifier `{0}`")]
    DuplicateId(String),

    #[error("column `{0}` has zero variance")]
    ZeroVarianceColumn(String),

    #[error("no species has at least {0} detections")]
    AllSpeciesRemoved(usize),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite result: {0}")]
    NonFiniteResult(String),

    #[error("domain error: {0}")]
    DomainError(String),

    #[error("non-finite objective at draw {draw}")]
    NonFiniteObjective { draw: usize },

    #[error("non-finite gradient at {0}")]
    NonFiniteGradient(String),

    #[error("{divergent} of {total} post-warmup transitions diverged")]
    AllDivergent { divergent: usize, total: usize },

    #[error("too few draws: {0} per split chain, need at least 4")]
    TooFewDraws(usize),

    #[error("species `{0}` has no detections")]
    NoDetections(String),

    #[error("labels contain only one class")]
    DegenerateLabels,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}, line {line}: cannot parse `{value}` as a number")]
    Parse {
        path: PathBuf,
        line: u64,
        value: String,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
