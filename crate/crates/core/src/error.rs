use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid grid specification: {0}")]
    Spec(String),

    #[error("grid size overflows 64 bits")]
    Overflow,

    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error("unknown factor `{0}`")]
    UnknownFactor(String),

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("filter expression: {0}")]
    Filter(String),

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient degrees of freedom: {n} observations for {k} coefficients")]
    InsufficientDf { n: usize, k: usize },

    #[error("unknown study `{name}`; registered studies: {}", available.join(", "))]
    UnknownStudy { name: String, available: Vec<String> },

    #[error("duplicate row_id {0} in results")]
    DuplicateRowId(u64),

    #[error("invalid run configuration: {0}")]
    RunConfig(String),

    #[error("row {row_id} failed: {message}")]
    RowFailed { row_id: u64, message: String },

    #[error("run cancelled after {completed} rows")]
    Cancelled { completed: usize },

    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },

    #[error("config: {0}")]
    Config(String),

    #[error("plot: {0}")]
    Plot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Parquet(#[from] parquet::errors::ParquetError),

    #[error(transparent)]
    Arrow(#[from] arrow_schema::ArrowError),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
