use thiserror::Error;

/// Errors produced by the data layer.
#[derive(Debug, Error)]
pub enum CoreError {
    /// A dataset specification is structurally invalid (bad channel count,
    /// out-of-range coefficient, non-PSD noise covariance, ...).
    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    /// A series violates a structural invariant.
    #[error("invalid series: {0}")]
    InvalidSeries(String),

    /// CSV ingestion failed. `row` is the 1-based data row (0 = header).
    #[error("ingestion error at row {row}: {msg}")]
    Ingest { row: usize, msg: String },

    /// Fitting or applying the preprocessing transform failed.
    #[error("preprocess error: {0}")]
    Preprocess(String),

    /// Windowing parameters do not fit the series.
    #[error("segmentation error: {0}")]
    Segment(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;
