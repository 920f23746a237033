use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("output error: {0}")]
    Output(String),
    #[error("ids do not match: missing predictions for {missing:?}, no reference for {unknown:?}")]
    IdMismatch {
        missing: Vec<String>,
        unknown: Vec<String>,
    },
    #[error(transparent)]
    Core(#[from] hera_core::Error),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Input(_) => "input",
            CliError::Output(_) => "output",
            CliError::IdMismatch { .. } => "id_mismatch",
            CliError::Core(_) => "pipeline",
        }
    }

    /// The error as a single JSON object for stderr.
    pub fn to_json(&self) -> serde_json::Value {
        let mut value = serde_json::json!({
            "error": self.kind(),
            "message": self.to_string(),
        });
        if let CliError::IdMismatch { missing, unknown } = self {
            value["missing"] = serde_json::json!(missing);
            value["unknown"] = serde_json::json!(unknown);
        }
        value
    }
}

/// One failed document, as reported on stderr.
#[derive(Debug, Clone, Serialize)]
pub struct DocumentFailure {
    pub id: String,
    pub stage: Option<String>,
    pub message: String,
}
