use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, IdError>;

#[derive(Debug, Error)]
pub enum IdError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed file: {0}")]
    Format(String),
    #[error("bad shape: {0}")]
    Shape(String),
    #[error("invalid data at row {row}: {message}")]
    Data { row: usize, message: String },
    #[error("layer {layer} is inconsistent with layer 0: {message}")]
    Consistency { layer: usize, message: String },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("index {index} out of range for {len} points")]
    Index { index: usize, len: usize },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("calibration inversion failed: {0}")]
    Inversion(String),
    #[error("too few samples: {0}")]
    Sample(String),
    #[error("estimate quality too low: {0}")]
    Quality(String),
    #[error("unknown estimator '{0}'")]
    Registry(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("layer {0} has no estimate")]
    MissingLayer(usize),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl IdError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        IdError::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable machine-readable tag, used in the CLI's error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            IdError::Io { .. } => "IoError",
            IdError::Format(_) => "FormatError",
            IdError::Shape(_) => "ShapeError",
            IdError::Data { .. } => "DataError",
            IdError::Consistency { .. } => "ConsistencyError",
            IdError::Parameter(_) => "ParameterError",
            IdError::Index { .. } => "IndexError",
            IdError::Degenerate(_) => "DegenerateError",
            IdError::Inversion(_) => "InversionError",
            IdError::Sample(_) => "SampleError",
            IdError::Quality(_) => "QualityError",
            IdError::Registry(_) => "RegistryError",
            IdError::Empty(_) => "EmptyError",
            IdError::Schema(_) => "SchemaError",
            IdError::MissingLayer(_) => "MissingLayerError",
            IdError::Json(_) => "JsonError",
            IdError::Csv(_) => "CsvError",
        }
    }
}
