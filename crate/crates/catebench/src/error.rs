use thiserror::Error;

/// Crate-wide error type. The CLI maps variants onto exit codes:
/// configuration problems exit 1, data problems exit 2, and a benchmark
/// that completed with failed cells exits 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("data error at row {row}, column {col}: {msg}")]
    DataAt { row: usize, col: String, msg: String },

    #[error("fit error: {0}")]
    Fit(String),

    #[error("shap error: {0}")]
    Shap(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
