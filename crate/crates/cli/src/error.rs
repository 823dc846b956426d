use serde_json::json;
use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("line {line}: dimension {dim_id:?} has limits that differ from its first row")]
    InconsistentSpec { dim_id: String, line: u64 },
    #[error("line {line}: {message}")]
    ParseError { line: u64, message: String },
    #[error("dimension {0:?} has no measurements")]
    EmptyDimension(String),
    #[error("{path}: {source}")]
    Config {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("missing required argument --{0}")]
    MissingArgument(&'static str),
    #[error(transparent)]
    Core(#[from] uccap_core::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::InconsistentSpec { .. } => "InconsistentSpec",
            CliError::ParseError { .. } => "ParseError",
            CliError::EmptyDimension(_) => "EmptyDimension",
            CliError::Config { .. } => "ConfigError",
            CliError::MissingArgument(_) => "MissingArgument",
            CliError::Core(e) => e.kind(),
            CliError::Csv(_) => "CsvError",
            CliError::Json(_) => "JsonError",
            CliError::Io(_) => "Io",
        }
    }

    pub fn line(&self) -> Option<u64> {
        match self {
            CliError::InconsistentSpec { line, .. } | CliError::ParseError { line, .. } => Some(*line),
            _ => None,
        }
    }

    /// Machine-readable form written to stderr on failure.
    pub fn to_json(&self) -> serde_json::Value {
        let mut v = json!({ "error": self.kind(), "message": self.to_string() });
        if let Some(line) = self.line() {
            v["line"] = json!(line);
        }
        v
    }
}
