use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] rwis::Error),
    #[error("usage: {0}")]
    Usage(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("toml serialisation error: {0}")]
    TomlWrite(#[from] toml::ser::Error),
    #[error("model failed validation: {0}")]
    ValidationFailed(String),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            Self::Core(e) => match e {
                rwis::Error::InvalidModel(_) | rwis::Error::NotStochastic { .. } => "invalid_model",
                rwis::Error::ModelFile { .. } => "model_file",
                rwis::Error::Config { .. } => "config",
                rwis::Error::NoSpectralGap(_) => "no_spectral_gap",
                rwis::Error::BranchAmbiguity { .. } => "branch_ambiguity",
                rwis::Error::ExpansionMismatch { .. } => "expansion_mismatch",
                rwis::Error::WindowTooSmall { .. } => "window_too_small",
                rwis::Error::Quadrature(_) => "quadrature",
                rwis::Error::Precondition(_) => "precondition",
                rwis::Error::EventBudget { .. } => "event_budget",
                rwis::Error::TooManyRenewals(_) => "too_many_renewals",
                rwis::Error::Io(_) => "io",
                rwis::Error::Csv(_) => "csv",
            },
            Self::Usage(_) => "usage",
            Self::Io(_) => "io",
            Self::Csv(_) => "csv",
            Self::Json(_) => "json",
            Self::TomlWrite(_) => "toml",
            Self::ValidationFailed(_) => "validation_failed",
        }
    }

    /// Machine-readable form written to stderr.
    pub fn to_json(&self) -> Value {
        let mut v = json!({ "kind": self.kind(), "message": self.to_string() });
        if let Self::Core(e) = self {
            match e {
                rwis::Error::ModelFile { line, column, .. } | rwis::Error::Config { line, column, .. } => {
                    v["line"] = json!(line);
                    v["column"] = json!(column);
                }
                rwis::Error::WindowTooSmall { suggested, .. } => v["suggested_radius"] = json!(suggested),
                rwis::Error::EventBudget { checkpoint, .. } => {
                    v["checkpoint"] = serde_json::to_value(checkpoint.as_ref()).unwrap_or(Value::Null)
                }
                _ => {}
            }
        }
        json!({ "error": v })
    }
}
