use chrono::NaiveDate;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, QrseError>;

#[derive(Debug, Error)]
pub enum QrseError {
    /// Input file does not match the declared CSV layout.
    #[error("schema error: {0}")]
    Schema(String),

    /// A parsed value violates a domain constraint (e.g. a non-positive price).
    #[error("value error at row {row}: {message}")]
    Value { row: usize, message: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// No asset carries data on both ends of a day, so the index cannot advance.
    #[error("index gap on {date}: no asset with complete data for the previous and current day")]
    IndexGap { date: NaiveDate },

    #[error("grid does not cover the distribution: boundary mass {tail_mass:e} exceeds {limit:e}")]
    GridCoverage { tail_mass: f64, limit: f64 },

    #[error("grid mismatch between model and histogram")]
    Alignment,

    /// Sample falls outside the histogram grid.
    #[error("sample value {value} lies outside grid [{lo}, {hi}]")]
    SampleOutsideGrid { value: f64, lo: f64, hi: f64 },

    /// Too few observations to bin a window; callers skip the window.
    #[error("window holds {n_obs} observations, fewer than the minimum {min_obs}")]
    UndersizedWindow { n_obs: usize, min_obs: usize },

    #[error("degenerate window: {0}")]
    DegenerateWindow(String),

    #[error("degenerate regression: {0}")]
    DegenerateRegression(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl QrseError {
    /// Short machine-readable tag for the error family.
    pub fn kind(&self) -> &'static str {
        match self {
            QrseError::Schema(_) => "schema",
            QrseError::Value { .. } => "value",
            QrseError::InsufficientData(_) => "insufficient_data",
            QrseError::Parameter(_) => "parameter",
            QrseError::IndexGap { .. } => "index_gap",
            QrseError::GridCoverage { .. } => "grid_coverage",
            QrseError::Alignment => "alignment",
            QrseError::SampleOutsideGrid { .. } => "coverage",
            QrseError::UndersizedWindow { .. } => "undersized_window",
            QrseError::DegenerateWindow(_) => "degenerate_window",
            QrseError::DegenerateRegression(_) => "degenerate_regression",
            QrseError::Io(_) => "io",
            QrseError::Csv(_) => "csv",
        }
    }
}
