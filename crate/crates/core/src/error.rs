//! Crate-wide error type. Variants map to the failure modes callers are
//! expected to branch on: bad input files, bad configuration, degenerate
//! training data, and shape mismatches at predict time.

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("population size must be at least 1")]
    EmptyPopulation,

    #[error("dataset parse error at row {row}, column {column}: {message}")]
    DatasetFormat {
        row: usize,
        column: String,
        message: String,
    },

    #[error("unknown preference label {0:?} (expected cooler, no_change or warmer)")]
    UnknownLabel(String),

    #[error("candidate pool error: {0}")]
    Pool(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate dataset: {0}")]
    DegenerateDataset(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("feature layout mismatch: {0}")]
    Shape(String),

    #[error("cold start: committee requested with an empty labelled set")]
    ColdStart,

    #[error("input error: {0}")]
    Input(String),

    #[error("weather series error: {0}")]
    WeatherFormat(String),

    #[error("labelling effort is undefined: zero candidates presented")]
    UndefinedEffort,

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, SimError>;

impl SimError {
    /// Attaches a path to a raw `std::io::Error`.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SimError::Io {
            path: path.into(),
            source,
        }
    }
}
