use std::path::PathBuf;

use qrse_core::QrseError;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] QrseError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Config file or override that fails to parse or validate.
    #[error("config: {0}")]
    Config(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("no window produced a converged fit ({skipped} skipped, {unconverged} unconverged)")]
    NoFits { skipped: usize, unconverged: usize },

    #[error("selftest failed: {0}")]
    Selftest(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Io { .. } => "io",
            CliError::Config(_) => "config",
            CliError::Json(_) => "json",
            CliError::NoFits { .. } => "no_fits",
            CliError::Selftest(_) => "selftest",
        }
    }

    /// `error kind=<kind>: <message>` on one line.
    pub fn one_line(&self) -> String {
        let msg = self.to_string();
        let words: Vec<&str> = msg.split_whitespace().collect();
        format!("error kind={}: {}", self.kind(), words.join(" "))
    }
}
