use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("shape escapes domain (shape #{index})")]
    ShapeEscapesDomain { index: usize },

    #[error("one-sided source: positive mass {positive:e}, negative mass {negative:e}")]
    OneSidedSource { positive: f64, negative: f64 },

    #[error("non-positive slope bound k = {value} at cell ({i}, {j})")]
    NonPositiveK { i: usize, j: usize, value: f64 },

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("invalid solver parameters: {0}")]
    InvalidParams(String),

    #[error(
        "initial surface violates the slope bound at cell ({i}, {j}): slope {slope} > {bound}"
    )]
    InadmissibleInitialSurface {
        i: usize,
        j: usize,
        slope: f64,
        bound: f64,
    },

    #[error("divergence of iteration at step {step}")]
    Divergence { step: usize },

    #[error("field dimensions {found:?} do not match grid {expected:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("min-cost flow: {0}")]
    Flow(String),

    #[error("{0}")]
    Oracle(String),

    #[error("unknown key '{key}' at line {line}")]
    UnknownKey { key: String, line: usize },

    #[error("line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("{0}")]
    ConfigValue(String),

    #[error("malformed field file {path}: {msg}")]
    FieldFile { path: PathBuf, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
